//! Brute-force Tverberg partition search over restricted-growth strings.

use super::combinatorics::{blocks_of, restricted_growth_strings};
use super::hull::{hull_intersection_point, IntersectionProgram};
use super::point::{PointMultiset, RationalPoint};
use super::GeomError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TverbergPartition {
    /// Index sets into the input multiset, one per block.
    pub blocks: Vec<Vec<usize>>,
    /// Lexicographically smallest point common to every block hull.
    pub witness: RationalPoint,
}

/// First partition of `y` into `f + 1` blocks whose hulls share a point.
pub fn tverberg_oracle(y: &PointMultiset, f: usize) -> Result<Option<TverbergPartition>, GeomError> {
    if y.len() < f + 1 {
        return Err(GeomError::Precondition(format!(
            "need at least f + 1 = {} points",
            f + 1
        )));
    }
    let dim = y.dim()?.expect("non-empty");
    for rgs in restricted_growth_strings(y.len(), f + 1) {
        let blocks = blocks_of(&rgs);
        if !bounding_boxes_meet(y, &blocks, dim) {
            continue;
        }
        let hulls: Vec<PointMultiset> = blocks.iter().map(|b| y.select(b)).collect();
        if IntersectionProgram::new(&hulls, dim).solve_point()?.is_some() {
            let witness = hull_intersection_point(&hulls)?.expect("feasible program has a minimum");
            return Ok(Some(TverbergPartition { blocks, witness }));
        }
    }
    Ok(None)
}

/// Necessary condition for the block hulls to intersect.
fn bounding_boxes_meet(y: &PointMultiset, blocks: &[Vec<usize>], dim: usize) -> bool {
    (0..dim).all(|l| {
        let mut lower = None;
        let mut upper = None;
        for block in blocks {
            let coords = block.iter().map(|&i| y.get(i).coord(l));
            let lo = coords.clone().min().unwrap();
            let hi = coords.max().unwrap();
            if lower.is_none_or(|cur| lo > cur) {
                lower = Some(lo);
            }
            if upper.is_none_or(|cur| hi < cur) {
                upper = Some(hi);
            }
        }
        lower <= upper
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points_on_a_line() {
        // Partitions in order: {0,1}|{2}, {0,2}|{1}, {0}|{1,2}. Only the
        // second has intersecting hulls: [0,2] contains 1.
        let y: PointMultiset = [0, 1, 2].iter().map(|&v| RationalPoint::from_ints(&[v])).collect();
        let part = tverberg_oracle(&y, 1).unwrap().unwrap();
        assert_eq!(part.blocks, vec![vec![0, 2], vec![1]]);
        assert_eq!(part.witness, RationalPoint::from_ints(&[1]));
    }

    #[test]
    fn identical_points_partition_trivially() {
        let p = RationalPoint::from_ints(&[4, 4]);
        let y = PointMultiset::new(vec![p.clone(); 7]);
        let part = tverberg_oracle(&y, 2).unwrap().unwrap();
        assert_eq!(part.blocks.len(), 3);
        assert_eq!(part.witness, p);
    }

    #[test]
    fn below_threshold_may_have_no_partition() {
        // Three affinely independent points in the plane with f = 1.
        let y: PointMultiset = [[0, 0], [1, 0], [0, 1]]
            .iter()
            .map(|c| RationalPoint::from_ints(c))
            .collect();
        assert_eq!(tverberg_oracle(&y, 1).unwrap(), None);
    }
}
