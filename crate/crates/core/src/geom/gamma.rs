//! `Γ(Y)`: the intersection of the convex hulls of every `(|Y| - f)`-subset
//! of a multiset, and the deterministic choice of one point inside it.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;

use super::combinatorics::colex_subsets;
use super::hull::{hull_contains, IntersectionProgram};
use super::point::{PointMultiset, RationalPoint};
use super::rational::Rational;
use super::GeomError;

/// Index subsets of size `|Y| - f`, in colexicographic order.
pub fn safe_region_subsets(len: usize, f: usize) -> impl Iterator<Item = Vec<usize>> {
    colex_subsets(len, len - f)
}

/// How the lexicographic minimum of `Γ(Y)` is located. Both give the same
/// point, since the lexicographic minimum of a polytope is unique.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMethod {
    /// One program with a weight block for every subset.
    Joint,
    /// Start from one subset hull, solve, add the subset hulls the candidate
    /// falls outside of, and repeat until the candidate is in all of them.
    Lazy,
    /// `Joint` up to [`JOINT_SUBSET_LIMIT`] subsets, `Lazy` above.
    Auto,
}

pub const JOINT_SUBSET_LIMIT: usize = 8;

/// Lexicographically smallest point of `Γ(Y)`.
///
/// Members are sorted before the subsets are enumerated, so equal
/// multisets produce the identical program and the identical point
/// regardless of the order in which they were collected.
pub fn gamma_select(y: &PointMultiset, f: usize) -> Result<RationalPoint, GeomError> {
    gamma_select_with(y, f, GammaMethod::Auto)
}

pub fn gamma_select_with(y: &PointMultiset, f: usize, method: GammaMethod) -> Result<RationalPoint, GeomError> {
    if y.len() <= f {
        return Err(GeomError::Precondition(format!(
            "Γ needs more than f = {f} points, got {}",
            y.len()
        )));
    }
    let dim = y.dim()?.expect("non-empty");
    let y = y.canonical();
    // A point repeated |Y| - f times is a whole subset by itself, so Γ is
    // at most that point, and it is in every subset hull iff it survives
    // the removal of any f members.
    if let Some((p, count)) = most_repeated(&y) {
        if count >= y.len() - f {
            return if count > f {
                Ok(p.clone())
            } else {
                Err(GeomError::EmptyIntersection)
            };
        }
    }
    let (origin, scale, y) = to_integer_frame(&y);
    let hulls: Vec<PointMultiset> = distinct_supports(&y, f).iter().map(|idx| y.select(idx)).collect();
    let joint = match method {
        GammaMethod::Joint => true,
        GammaMethod::Lazy => false,
        GammaMethod::Auto => hulls.len() <= JOINT_SUBSET_LIMIT,
    };
    let point = if joint {
        IntersectionProgram::new(&hulls, dim)
            .lexicographic_min()
            .solve_point()?
    } else {
        lazy_lexmin(&hulls, dim)?
    };
    let point = point.ok_or(GeomError::EmptyIntersection)?;
    Ok(RationalPoint::new(
        origin
            .coords()
            .iter()
            .zip(point.coords())
            .map(|(o, c)| o + c / &scale)
            .collect(),
    ))
}

/// Whether `p` lies in `Γ(Y)`.
pub fn gamma_contains(y: &PointMultiset, f: usize, p: &RationalPoint) -> Result<bool, GeomError> {
    if y.len() <= f {
        return Err(GeomError::Precondition(format!(
            "Γ needs more than f = {f} points, got {}",
            y.len()
        )));
    }
    let y = y.canonical();
    let hulls: Vec<PointMultiset> = distinct_supports(&y, f).iter().map(|idx| y.select(idx)).collect();
    if !hulls.iter().all(|h| in_bounding_box(h, p)) {
        return Ok(false);
    }
    for hull in &hulls {
        if !hull_contains(hull, p)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Caller-owned cache of `Γ` points. Once states settle, a process asks
/// for the same subsets round after round.
#[derive(Debug, Default)]
pub struct GammaMemo {
    seen: HashMap<MemoKey, Result<RationalPoint, GeomError>>,
}

/// Hashes numerators and denominators directly. Rationals are kept in
/// lowest terms, so this agrees with equality, and it avoids the
/// continued-fraction walk of the `Ratio` hash on long values.
#[derive(Debug, PartialEq, Eq)]
struct MemoKey(Vec<RationalPoint>, usize);

impl Hash for MemoKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for c in self.0.iter().flat_map(|p| p.coords()) {
            c.numer().hash(state);
            c.denom().hash(state);
        }
        self.1.hash(state);
    }
}

const MEMO_LIMIT: usize = 4096;

impl GammaMemo {
    /// Same result as [`gamma_select`].
    pub fn select(&mut self, y: &PointMultiset, f: usize) -> Result<RationalPoint, GeomError> {
        let key = MemoKey(y.canonical().into_members(), f);
        if let Some(known) = self.seen.get(&key) {
            return known.clone();
        }
        let result = gamma_select(y, f);
        if self.seen.len() >= MEMO_LIMIT {
            self.seen.clear();
        }
        self.seen.insert(key, result.clone());
        result
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Above this many bits the common denominator is not worth multiplying
/// through and only the translation is applied.
const SCALE_LIMIT_BITS: u64 = 1024;

/// Translates `y` so its first member is the origin and multiplies by the
/// common denominator of the result. Translation and positive scaling keep
/// the lexicographic order, so the minimum maps back exactly. Nearly equal
/// states with long dyadic coordinates become small integers this way.
fn to_integer_frame(y: &PointMultiset) -> (RationalPoint, Rational, PointMultiset) {
    let origin = y.get(0).clone();
    let shifted: Vec<Vec<Rational>> = y
        .members()
        .iter()
        .map(|p| p.coords().iter().zip(origin.coords()).map(|(c, o)| c - o).collect())
        .collect();
    let mut lcm = BigInt::one();
    for c in shifted.iter().flatten() {
        lcm = lcm.lcm(c.denom());
    }
    let scale = if lcm.bits() <= SCALE_LIMIT_BITS {
        Rational::from_integer(lcm)
    } else {
        Rational::one()
    };
    let members = shifted
        .into_iter()
        .map(|cs| RationalPoint::new(cs.into_iter().map(|c| c * &scale).collect()))
        .collect();
    (origin, scale, PointMultiset::new(members))
}

/// Subset hulls only depend on which distinct points a subset contains,
/// and a hull whose support contains another's is redundant in the
/// intersection. Returns the minimal supports as indices of first
/// occurrences in the sorted `y`, in colex order of their first subset.
fn distinct_supports(sorted: &PointMultiset, f: usize) -> Vec<Vec<usize>> {
    let members = sorted.members();
    let first: Vec<usize> = (0..members.len())
        .scan(0, |head, i| {
            if members[i] != members[*head] {
                *head = i;
            }
            Some(*head)
        })
        .collect();
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for idx in safe_region_subsets(members.len(), f) {
        let mut support: Vec<usize> = idx.iter().map(|&i| first[i]).collect();
        support.dedup();
        if !supports.contains(&support) {
            supports.push(support);
        }
    }
    let contains = |big: &[usize], small: &[usize]| small.iter().all(|i| big.binary_search(i).is_ok());
    supports
        .iter()
        .filter(|s| !supports.iter().any(|t| t.len() < s.len() && contains(s, t)))
        .cloned()
        .collect()
}

/// Most frequent member of a sorted multiset; the smallest one on ties.
fn most_repeated(sorted: &PointMultiset) -> Option<(&RationalPoint, usize)> {
    let mut best: Option<(&RationalPoint, usize)> = None;
    for run in sorted.members().chunk_by(|a, b| a == b) {
        if best.is_none_or(|(_, c)| run.len() > c) {
            best = Some((&run[0], run.len()));
        }
    }
    best
}

fn lazy_lexmin(hulls: &[PointMultiset], dim: usize) -> Result<Option<RationalPoint>, GeomError> {
    // The last colex subset drops the f lexicographically smallest members,
    // which is where the minimum usually sits.
    let mut active = vec![hulls.len() - 1];
    loop {
        let chosen: Vec<PointMultiset> = active.iter().map(|&i| hulls[i].clone()).collect();
        let Some(z) = IntersectionProgram::new(&chosen, dim)
            .lexicographic_min()
            .solve_point()?
        else {
            return Ok(None);
        };
        let outside_box = (0..hulls.len()).find(|&i| !active.contains(&i) && !in_bounding_box(&hulls[i], &z));
        let violated = match outside_box {
            Some(i) => Some(i),
            None => {
                let mut found = None;
                for (i, hull) in hulls.iter().enumerate() {
                    if !active.contains(&i) && !hull_contains(hull, &z)? {
                        found = Some(i);
                        break;
                    }
                }
                found
            }
        };
        match violated {
            Some(i) => active.push(i),
            None => return Ok(Some(z)),
        }
    }
}

fn in_bounding_box(hull: &PointMultiset, z: &RationalPoint) -> bool {
    (0..z.dim()).all(|l| {
        let coords = hull.members().iter().map(|p| p.coord(l));
        coords.clone().min().is_some_and(|lo| lo <= z.coord(l)) && coords.max().is_some_and(|hi| hi >= z.coord(l))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::hull::hull_contains;

    fn line(values: &[i64]) -> PointMultiset {
        values.iter().map(|&v| RationalPoint::from_ints(&[v])).collect()
    }

    /// Γ in one dimension by interval intersection over explicit subsets.
    fn interval_oracle(values: &[i64], f: usize) -> Option<(i64, i64)> {
        let mut lo = i64::MIN;
        let mut hi = i64::MAX;
        for idx in colex_subsets(values.len(), values.len() - f) {
            let sub: Vec<i64> = idx.iter().map(|&i| values[i]).collect();
            lo = lo.max(*sub.iter().min().unwrap());
            hi = hi.min(*sub.iter().max().unwrap());
        }
        (lo <= hi).then_some((lo, hi))
    }

    #[test]
    fn worked_interval_example() {
        assert_eq!(interval_oracle(&[0, 6, 12, 3], 1), Some((3, 6)));
        assert_eq!(
            gamma_select(&line(&[0, 6, 12, 3]), 1).unwrap(),
            RationalPoint::from_ints(&[3])
        );
    }

    #[test]
    fn identical_copies_return_the_point() {
        let p = RationalPoint::from_ints(&[2, -7, 5]);
        let y = PointMultiset::new(vec![p.clone(); 4]);
        for f in 0..4 {
            assert_eq!(gamma_select(&y, f).unwrap(), p);
        }
    }

    #[test]
    fn a_dominant_repeated_point_is_all_of_gamma() {
        let y: PointMultiset = [[3, 3], [3, 3], [3, 3], [0, 9]]
            .iter()
            .map(|c| RationalPoint::from_ints(c))
            .collect();
        assert_eq!(gamma_select(&y, 1).unwrap(), RationalPoint::from_ints(&[3, 3]));
        assert_eq!(
            gamma_select_with(&y, 1, GammaMethod::Joint).unwrap(),
            RationalPoint::from_ints(&[3, 3])
        );
        // Two copies out of four with f = 2: a subset without the point exists.
        let z: PointMultiset = [[3, 3], [3, 3], [0, 9], [5, 1]]
            .iter()
            .map(|c| RationalPoint::from_ints(c))
            .collect();
        assert_eq!(gamma_select(&z, 2), Err(GeomError::EmptyIntersection));
    }

    #[test]
    fn memo_returns_what_gamma_select_returns() {
        let mut memo = GammaMemo::default();
        let y = line(&[0, 6, 12, 3]);
        let shuffled = line(&[12, 3, 0, 6]);
        assert_eq!(memo.select(&y, 1), gamma_select(&y, 1));
        assert_eq!(memo.select(&shuffled, 1), gamma_select(&y, 1));
        assert_eq!(memo.len(), 1);
        let empty = line(&[0, 1]);
        assert_eq!(memo.select(&empty, 1), Err(GeomError::EmptyIntersection));
        assert_eq!(memo.select(&empty, 1), Err(GeomError::EmptyIntersection));
        assert_eq!(memo.len(), 2);
    }

    #[test]
    fn standard_basis_plus_origin_has_empty_gamma() {
        let y = PointMultiset::new(vec![
            RationalPoint::from_ints(&[1, 0]),
            RationalPoint::from_ints(&[0, 1]),
            RationalPoint::from_ints(&[0, 0]),
        ]);
        assert_eq!(gamma_select(&y, 1), Err(GeomError::EmptyIntersection));
    }

    #[test]
    fn too_few_points_is_a_precondition_error() {
        assert!(matches!(
            gamma_select(&line(&[1, 2]), 2),
            Err(GeomError::Precondition(_))
        ));
    }

    #[test]
    fn agrees_with_interval_oracle_on_small_lines() {
        let samples: &[&[i64]] = &[
            &[0, 1, 2],
            &[5, -3, 8, 8],
            &[1, 9, 4, 4, 7],
            &[2, 2, 9],
            &[0, 10, 3, 7, 1, 6],
        ];
        for values in samples {
            for f in 0..values.len() {
                let got = gamma_select(&line(values), f);
                match interval_oracle(values, f) {
                    Some((lo, _)) => assert_eq!(got.unwrap(), RationalPoint::from_ints(&[lo]), "{values:?} f={f}"),
                    None => assert_eq!(got, Err(GeomError::EmptyIntersection), "{values:?} f={f}"),
                }
            }
        }
    }

    #[test]
    fn selected_point_lies_in_every_subset_hull() {
        let y: PointMultiset = [[0, 0], [8, 1], [3, 9], [7, 7], [1, 5]]
            .iter()
            .map(|c| RationalPoint::from_ints(c))
            .collect();
        let z = gamma_select(&y, 1).unwrap();
        for idx in safe_region_subsets(y.len(), 1) {
            assert!(hull_contains(&y.select(&idx), &z).unwrap());
        }
    }
}
