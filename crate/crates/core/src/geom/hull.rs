//! Convex-hull membership and hull-intersection queries, all decided by
//! exact LP feasibility.

use num_traits::{One, Zero};

use super::lp::{lp_solve, FeasibilityProblem, LpOutcome, Relation};
use super::point::{PointMultiset, RationalPoint};
use super::rational::Rational;
use super::GeomError;

/// Joint LP for a point `z` lying in every hull of a list of multisets.
///
/// Variables `0..d` are the free coordinates of `z`; every hull contributes a
/// block of nonnegative weights `alpha` with `sum(alpha) = 1` and
/// `sum(alpha * s) = z`.
pub struct IntersectionProgram {
    pub problem: FeasibilityProblem,
    pub dim: usize,
    /// Starting variable index of each hull's weight block.
    pub blocks: Vec<usize>,
}

impl IntersectionProgram {
    pub fn new(hulls: &[PointMultiset], dim: usize) -> Self {
        let mut problem = FeasibilityProblem::new(dim);
        for l in 0..dim {
            problem.set_free(l);
        }
        let mut blocks = Vec::with_capacity(hulls.len());
        for hull in hulls {
            let start = problem.num_vars();
            blocks.push(start);
            for _ in 0..hull.len() {
                problem.add_var(false);
            }
            for l in 0..dim {
                let mut row: Vec<(usize, Rational)> = hull
                    .members()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| !s.coord(l).is_zero())
                    .map(|(i, s)| (start + i, s.coord(l).clone()))
                    .collect();
                row.push((l, -Rational::one()));
                problem.add_eq(row, Rational::zero());
            }
            let sum_row = (0..hull.len()).map(|i| (start + i, Rational::one())).collect();
            problem.add_eq(sum_row, Rational::one());
        }
        Self { problem, dim, blocks }
    }

    /// Adds objectives minimizing `z_1`, then `z_2`, and so on.
    pub fn lexicographic_min(mut self) -> Self {
        for l in 0..self.dim {
            self.problem.minimize_var(l);
        }
        self
    }

    /// Solves and returns the `z` part of the solution, if feasible.
    pub fn solve_point(&self) -> Result<Option<RationalPoint>, GeomError> {
        match lp_solve(&self.problem)? {
            LpOutcome::Feasible(x) => Ok(Some(RationalPoint::new(x[..self.dim].to_vec()))),
            LpOutcome::Infeasible => Ok(None),
        }
    }
}

fn common_dim<'a, I>(sets: I, extra: Option<&RationalPoint>) -> Result<usize, GeomError>
where
    I: IntoIterator<Item = &'a PointMultiset>,
{
    let mut dim = extra.map(|p| p.dim());
    for set in sets {
        if let Some(d) = set.dim()? {
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => return Err(GeomError::DimensionMismatch { expected, found: d }),
                _ => {}
            }
        }
    }
    dim.ok_or_else(|| GeomError::Precondition("no points given".into()))
}

/// True iff `p` is a convex combination of the members of `set`.
pub fn hull_contains(set: &PointMultiset, p: &RationalPoint) -> Result<bool, GeomError> {
    if set.is_empty() {
        return Err(GeomError::Precondition("hull of an empty multiset".into()));
    }
    let dim = common_dim([set], Some(p))?;
    // A singleton hull is the point itself.
    if set.len() == 1 {
        return Ok(set.get(0) == p);
    }
    // Repeated members add nothing to the hull.
    let mut distinct: Vec<&RationalPoint> = Vec::with_capacity(set.len());
    for s in set.members() {
        if !distinct.iter().any(|t| t.same_as(s)) {
            distinct.push(s);
        }
    }
    let mut problem = FeasibilityProblem::new(distinct.len());
    for l in 0..dim {
        let row = distinct
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.coord(l).is_zero())
            .map(|(i, s)| (i, s.coord(l).clone()))
            .collect();
        problem.add_eq(row, p.coord(l).clone());
    }
    problem.add_eq(
        (0..distinct.len()).map(|i| (i, Rational::one())).collect(),
        Rational::one(),
    );
    Ok(lp_solve(&problem)?.is_feasible())
}

/// True iff no point lies in every one of the given hulls.
pub fn hull_intersection_empty(hulls: &[PointMultiset]) -> Result<bool, GeomError> {
    Ok(hull_intersection_point(hulls)?.is_none())
}

/// Lexicographically smallest point of the intersection of the hulls.
pub fn hull_intersection_point(hulls: &[PointMultiset]) -> Result<Option<RationalPoint>, GeomError> {
    if hulls.is_empty() {
        return Err(GeomError::Precondition("empty list of hulls".into()));
    }
    if hulls.iter().any(|h| h.is_empty()) {
        return Err(GeomError::Precondition("hull of an empty multiset".into()));
    }
    let dim = common_dim(hulls, None)?;
    IntersectionProgram::new(hulls, dim).lexicographic_min().solve_point()
}

/// Largest `delta >= 0` such that some point `z` of the hull intersection has
/// `z[axis] = anchor[axis] + sign * delta`. `None` if the intersection is
/// empty or never reaches the anchor's coordinate.
pub fn max_axis_excursion(
    hulls: &[PointMultiset],
    anchor: &RationalPoint,
    axis: usize,
    positive: bool,
) -> Result<Option<Rational>, GeomError> {
    let dim = common_dim(hulls, Some(anchor))?;
    if axis >= dim {
        return Err(GeomError::Precondition(format!(
            "axis {axis} out of range for dimension {dim}"
        )));
    }
    let mut program = IntersectionProgram::new(hulls, dim);
    let delta = program.problem.add_var(false);
    let sign = if positive { -Rational::one() } else { Rational::one() };
    // z[axis] - sign' * delta = anchor[axis]
    program.problem.add_constraint(
        vec![(axis, Rational::one()), (delta, sign)],
        Relation::Eq,
        anchor.coord(axis).clone(),
    );
    program.problem.minimize(vec![(delta, -Rational::one())]);
    match lp_solve(&program.problem) {
        Ok(LpOutcome::Feasible(x)) => Ok(Some(x[delta].clone())),
        Ok(LpOutcome::Infeasible) => Ok(None),
        Err(e) => Err(e.into()),
    }
}
