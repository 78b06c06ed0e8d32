//! Executable versions of the lower-bound constructions.

use num_traits::{Signed, Zero};

use crate::geom::hull::max_axis_excursion;
use crate::geom::rational::{int, rational};
use std::collections::BTreeMap;

use crate::geom::{hull_contains, hull_intersection_empty, GeomError, PointMultiset, Rational, RationalPoint};
use crate::model::{Mode, ProcessId, ScenarioConfig, Strategy};
use crate::simnet::{Record, SimError};

use super::simulate;

fn unit(d: usize, axis: usize, scale: &Rational) -> RationalPoint {
    RationalPoint::new(
        (0..d)
            .map(|l| if l == axis { scale.clone() } else { Rational::zero() })
            .collect(),
    )
}

fn leave_one_out(points: &[RationalPoint], skip: usize) -> PointMultiset {
    points
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != skip)
        .map(|(_, p)| p.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thm1Result {
    pub d: usize,
    /// `e_1, …, e_d` followed by the origin.
    pub inputs: Vec<RationalPoint>,
    /// `membership[k][i]`: input `k` lies in the hull of all inputs but `i`.
    pub membership: Vec<Vec<bool>>,
    /// Inputs lying in each of the first `d` leave-one-out hulls.
    pub first_d_survivors: Vec<usize>,
    pub intersection_empty: bool,
}

/// With `n = d + 1` and `f = 1` the leave-one-out hulls of the standard
/// basis plus the origin have no common point.
pub fn thm1_demo(d: usize) -> Result<Thm1Result, GeomError> {
    if d == 0 {
        return Err(GeomError::Precondition("dimension must be at least 1".into()));
    }
    let mut inputs: Vec<_> = (0..d).map(|l| unit(d, l, &int(1))).collect();
    inputs.push(RationalPoint::splat(d, Rational::zero()));
    let hulls: Vec<_> = (0..=d).map(|i| leave_one_out(&inputs, i)).collect();
    let membership = inputs
        .iter()
        .map(|x| hulls.iter().map(|h| hull_contains(h, x)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let first_d_survivors = (0..=d).filter(|&k| membership[k][..d].iter().all(|&m| m)).collect();
    Ok(Thm1Result {
        d,
        inputs,
        membership,
        first_d_survivors,
        intersection_empty: hull_intersection_empty(&hulls)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thm3Process {
    pub process: usize,
    pub contains_input: bool,
    /// Largest move from the input along `+e_l` and `-e_l` that stays in the
    /// intersection, for every axis `l`.
    pub excursions: Vec<(Option<Rational>, Option<Rational>)>,
    pub singleton: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thm3Result {
    pub d: usize,
    pub epsilon: Rational,
    /// `x_i = 4ε·e_i` for `i < d`, then the origin twice.
    pub inputs: Vec<RationalPoint>,
    pub processes: Vec<Thm3Process>,
    /// Smallest over pairs of the first `d + 1` inputs of their largest
    /// coordinate difference.
    pub min_pair_gap: Rational,
}

impl Thm3Result {
    pub fn all_singletons(&self) -> bool {
        self.processes.iter().all(|p| p.singleton)
    }

    /// Forced decisions are the inputs, which are more than `ε` apart.
    pub fn agreement_violated(&self) -> bool {
        self.all_singletons() && self.min_pair_gap > self.epsilon
    }
}

/// With `n = d + 2` and `f = 1`, process `i ≤ d + 1` must decide inside the
/// intersection of the hulls of `{x_k : k ≠ j, k ≤ d + 1}` over `j ≠ i`.
/// Each such intersection is certified to be exactly `{x_i}`: the input is in
/// every hull and no point of the intersection differs from it in any
/// coordinate (each directional excursion has optimum 0).
pub fn thm3_demo(d: usize, epsilon: &Rational) -> Result<Thm3Result, GeomError> {
    if d == 0 || !epsilon.is_positive() {
        return Err(GeomError::Precondition("need d >= 1 and a positive epsilon".into()));
    }
    let scale = epsilon * int(4);
    let mut inputs: Vec<_> = (0..d).map(|l| unit(d, l, &scale)).collect();
    inputs.push(RationalPoint::splat(d, Rational::zero()));
    inputs.push(RationalPoint::splat(d, Rational::zero()));
    let visible = &inputs[..=d];

    let processes = forced_decisions(visible)?;

    let gap = |a: &RationalPoint, b: &RationalPoint| {
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| (x - y).abs())
            .max()
            .unwrap_or_else(Rational::zero)
    };
    let min_pair_gap = (0..=d)
        .flat_map(|a| ((a + 1)..=d).map(move |b| (a, b)))
        .map(|(a, b)| gap(&inputs[a], &inputs[b]))
        .min()
        .unwrap_or_else(Rational::zero);
    Ok(Thm3Result {
        d,
        epsilon: epsilon.clone(),
        inputs,
        processes,
        min_pair_gap,
    })
}

/// For each visible input `x_i`, certifies whether the intersection of the
/// hulls of `visible` minus one other input is exactly `{x_i}`.
pub fn forced_decisions(visible: &[RationalPoint]) -> Result<Vec<Thm3Process>, GeomError> {
    let d = visible.first().map_or(0, RationalPoint::dim);
    let mut processes = Vec::with_capacity(visible.len());
    for (i, x) in visible.iter().enumerate() {
        let hulls: Vec<_> = (0..visible.len())
            .filter(|&j| j != i)
            .map(|j| leave_one_out(visible, j))
            .collect();
        let mut contains_input = true;
        for h in &hulls {
            contains_input &= hull_contains(h, x)?;
        }
        let excursions = (0..d)
            .map(|l| {
                Ok((
                    max_axis_excursion(&hulls, x, l, true)?,
                    max_axis_excursion(&hulls, x, l, false)?,
                ))
            })
            .collect::<Result<Vec<_>, GeomError>>()?;
        let pinned = excursions
            .iter()
            .all(|(up, down)| up.as_ref().is_some_and(Zero::is_zero) && down.as_ref().is_some_and(Zero::is_zero));
        processes.push(Thm3Process {
            process: i,
            contains_input,
            excursions,
            singleton: contains_input && pinned,
        });
    }
    Ok(processes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntersectionFailure {
    pub seed: u64,
    pub round: u64,
    pub processes: (ProcessId, ProcessId),
    /// Identical tuples from non-faulty senders in the two sets.
    pub common: usize,
    pub required: usize,
    pub trace_sha256: String,
}

/// Restricted asynchronous rounds with one process too few, `n = (d + 4)f`
/// and `f = 1`. Tries each seed in turn and returns the first schedule in
/// which two non-faulty processes hold fewer than `(d + 1)f + 1` identical
/// non-faulty tuples in the same round.
pub fn undersized_restricted_async(
    d: usize,
    seeds: std::ops::Range<u64>,
) -> Result<Option<IntersectionFailure>, SimError> {
    let f = 1;
    let n = (d + 4) * f;
    let required = (d + 1) * f + 1;
    let mut cfg = ScenarioConfig::new(Mode::RestrictedAsync, n, f, d);
    cfg.name = format!("restricted-async-undersized-d{d}");
    cfg.allow_unsafe = true;
    cfg.faulty.insert(
        n - 1,
        Strategy::FixedLie {
            point: RationalPoint::splat(d, rational(1, 2)),
        },
    );
    let inputs: Vec<_> = (0..n)
        .map(|i| RationalPoint::new((0..d).map(|l| rational(((i + l) % n) as i64, n as i64)).collect()))
        .collect();
    for seed in seeds {
        cfg.seed = seed;
        let trace = match simulate(&cfg, &inputs) {
            Ok(trace) => trace,
            Err(e) => match e.partial_trace() {
                Some(trace) => trace.clone(),
                None => return Err(e),
            },
        };
        let mut sets: BTreeMap<u64, Vec<(ProcessId, &[(ProcessId, RationalPoint)])>> = BTreeMap::new();
        for entry in trace.journal.iter().filter(|e| !cfg.is_byzantine(e.process)) {
            if let Record::BSet { round, tuples } = &entry.record {
                sets.entry(*round).or_default().push((entry.process, tuples));
            }
        }
        for (round, list) in &sets {
            for (a, (p, bp)) in list.iter().enumerate() {
                for (q, bq) in &list[a + 1..] {
                    let common = bp
                        .iter()
                        .filter(|(k, v)| !cfg.is_byzantine(*k) && bq.iter().any(|(k2, v2)| k2 == k && v2 == v))
                        .count();
                    if common < required {
                        let (p, q) = ((*p).min(*q), (*p).max(*q));
                        return Ok(Some(IntersectionFailure {
                            seed,
                            round: *round,
                            processes: (p, q),
                            common,
                            required,
                            trace_sha256: trace.sha256(),
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section1Result {
    pub inputs: PointMultiset,
    pub point: RationalPoint,
    pub membership: bool,
}

/// Three probability vectors whose coordinate-wise consensus value
/// `(1/6, 1/6, 1/6)` is not in their hull.
pub fn section1_check() -> Result<Section1Result, GeomError> {
    let big = rational(2, 3);
    let small = rational(1, 6);
    let inputs: PointMultiset = (0..3)
        .map(|axis| {
            RationalPoint::new(
                (0..3)
                    .map(|l| if l == axis { big.clone() } else { small.clone() })
                    .collect(),
            )
        })
        .collect();
    let point = RationalPoint::splat(3, small);
    let membership = hull_contains(&inputs, &point)?;
    Ok(Section1Result {
        inputs,
        point,
        membership,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thm1_one_dimension() {
        let r = thm1_demo(1).unwrap();
        assert_eq!(
            r.inputs,
            vec![RationalPoint::from_ints(&[1]), RationalPoint::from_ints(&[0])]
        );
        assert!(r.intersection_empty);
        assert_eq!(r.membership, vec![vec![false, true], vec![true, false]]);
        assert_eq!(r.first_d_survivors, vec![1]);
    }

    #[test]
    fn thm3_interval_forces_the_input() {
        let r = thm3_demo(1, &rational(1, 4)).unwrap();
        assert_eq!(r.inputs[0], RationalPoint::from_ints(&[1]));
        assert!(r.all_singletons());
        assert_eq!(r.min_pair_gap, int(1));
        assert!(r.agreement_violated());
    }

    #[test]
    fn thm3_plane_pins_the_origin() {
        let r = thm3_demo(2, &rational(1, 4)).unwrap();
        assert!(r.agreement_violated());
        let p = &r.processes[2];
        assert!(p.contains_input && p.singleton);
        assert!(p
            .excursions
            .iter()
            .all(|(up, down)| up == &Some(int(0)) && down == &Some(int(0))));
    }

    #[test]
    fn equal_inputs_are_pinned_but_agree() {
        let same = vec![RationalPoint::from_ints(&[1, 1]); 3];
        assert!(forced_decisions(&same).unwrap().iter().all(|p| p.singleton));
    }

    #[test]
    fn a_wider_intersection_is_not_a_singleton() {
        // Four points on a line with one hull dropped at a time: the middle
        // of the segment survives, so the input is not pinned.
        let line: Vec<_> = [0, 1, 2, 3].iter().map(|&v| RationalPoint::from_ints(&[v])).collect();
        let r = forced_decisions(&line).unwrap();
        assert!(r.iter().any(|p| !p.singleton));
    }

    #[test]
    fn undersized_async_schedule_breaks_the_overlap() {
        let found = undersized_restricted_async(1, 0..50)
            .unwrap()
            .expect("a breaking schedule");
        assert!(found.common < found.required);
        assert_eq!(found.required, 3);
    }

    #[test]
    fn section1_point_is_outside() {
        assert!(!section1_check().unwrap().membership);
    }
}
