//! Exact-rational linear programming.
//!
//! Dense fraction-free tableau simplex: entries are integers over one
//! common denominator, so exact answers come without a gcd per operation.
//! Phase 1 minimizes the sum of artificial variables; phase 2 minimizes a
//! list of objectives in lexicographic priority order. After each objective is optimal, every
//! nonbasic column with a strictly positive reduced cost is frozen at zero,
//! which restricts later objectives to the optimal face of the earlier ones.
//! Entering columns follow the most negative reduced cost until a run of
//! degenerate pivots, then Bland's lowest-index rule; ratio ties leave by
//! lowest basis index.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use super::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// Linear constraints over `num_vars` variables, each either nonnegative or
/// free, plus an optional lexicographic list of linear objectives to minimize.
#[derive(Clone, Debug, Default)]
pub struct FeasibilityProblem {
    num_vars: usize,
    free: Vec<bool>,
    constraints: Vec<Constraint>,
    objectives: Vec<Vec<(usize, Rational)>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    Feasible(Vec<Rational>),
    Infeasible,
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LpOutcome::Feasible(_))
    }

    pub fn into_assignment(self) -> Option<Vec<Rational>> {
        match self {
            LpOutcome::Feasible(x) => Some(x),
            LpOutcome::Infeasible => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("objective {0} is unbounded below on the feasible region")]
    Unbounded(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

impl FeasibilityProblem {
    /// `num_vars` nonnegative variables and no constraints.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            free: vec![false; num_vars],
            constraints: Vec::new(),
            objectives: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn is_free(&self, var: usize) -> bool {
        self.free[var]
    }

    pub fn add_var(&mut self, free: bool) -> usize {
        self.num_vars += 1;
        self.free.push(free);
        self.num_vars - 1
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, Rational)>, relation: Relation, rhs: Rational) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, Rational)>, rhs: Rational) {
        self.add_constraint(coeffs, Relation::Eq, rhs);
    }

    /// Appends `coeffs · x` as the next objective in priority order.
    pub fn minimize(&mut self, coeffs: Vec<(usize, Rational)>) {
        self.objectives.push(coeffs);
    }

    pub fn minimize_var(&mut self, var: usize) {
        self.objectives.push(vec![(var, Rational::from_integer(1.into()))]);
    }

    fn validate(&self) -> Result<(), LpError> {
        for (i, c) in self.constraints.iter().enumerate() {
            if let Some((var, _)) = c.coeffs.iter().find(|(v, _)| *v >= self.num_vars) {
                return Err(LpError::Malformed(format!("constraint {i} references variable {var}")));
            }
        }
        for (i, obj) in self.objectives.iter().enumerate() {
            if let Some((var, _)) = obj.iter().find(|(v, _)| *v >= self.num_vars) {
                return Err(LpError::Malformed(format!("objective {i} references variable {var}")));
            }
        }
        Ok(())
    }

    /// True iff `x` satisfies every constraint exactly.
    pub fn is_satisfied_by(&self, x: &[Rational]) -> bool {
        if x.len() != self.num_vars {
            return false;
        }
        if (0..self.num_vars).any(|j| !self.free[j] && x[j].is_negative()) {
            return false;
        }
        self.constraints.iter().all(|c| {
            let lhs: Rational = c.coeffs.iter().map(|(v, a)| a * &x[*v]).sum();
            match c.relation {
                Relation::Eq => lhs == c.rhs,
                Relation::Le => lhs <= c.rhs,
                Relation::Ge => lhs >= c.rhs,
            }
        })
    }
}

/// Solves the problem exactly. With objectives, the returned assignment
/// attains the lexicographic minimum of the objective values.
pub fn lp_solve(problem: &FeasibilityProblem) -> Result<LpOutcome, LpError> {
    problem.validate()?;
    let layout = ColumnLayout::new(problem);
    let mut tableau = Tableau::build(problem, &layout);

    if !tableau.phase_one() {
        return Ok(LpOutcome::Infeasible);
    }
    for (k, objective) in problem.objectives.iter().enumerate() {
        let cost = layout.cost_vector(objective, tableau.width);
        tableau.optimize(&cost).map_err(|()| LpError::Unbounded(k))?;
    }
    Ok(LpOutcome::Feasible(layout.extract(&tableau)))
}

/// Maps problem variables to nonnegative tableau columns.
struct ColumnLayout {
    /// (positive column, optional negative column) per problem variable.
    var_cols: Vec<(usize, Option<usize>)>,
    /// Slack column per constraint, with its sign in the row.
    slack_cols: Vec<Option<(usize, bool)>>,
    structural: usize,
}

impl ColumnLayout {
    fn new(problem: &FeasibilityProblem) -> Self {
        let mut next = 0;
        let mut var_cols = Vec::with_capacity(problem.num_vars);
        for j in 0..problem.num_vars {
            let pos = next;
            next += 1;
            let neg = if problem.free[j] {
                next += 1;
                Some(next - 1)
            } else {
                None
            };
            var_cols.push((pos, neg));
        }
        let mut slack_cols = Vec::with_capacity(problem.constraints.len());
        for c in &problem.constraints {
            slack_cols.push(match c.relation {
                Relation::Eq => None,
                Relation::Le => {
                    next += 1;
                    Some((next - 1, true))
                }
                Relation::Ge => {
                    next += 1;
                    Some((next - 1, false))
                }
            });
        }
        Self {
            var_cols,
            slack_cols,
            structural: next,
        }
    }

    /// Rational coefficients spread over the tableau columns.
    fn spread(&self, coeffs: &[(usize, Rational)], width: usize) -> Vec<Rational> {
        let mut row = vec![Rational::zero(); width];
        let add = |slot: &mut Rational, v: &Rational| {
            if slot.is_zero() {
                *slot = v.clone();
            } else {
                *slot += v;
            }
        };
        for (var, coeff) in coeffs {
            let (pos, neg) = self.var_cols[*var];
            add(&mut row[pos], coeff);
            if let Some(neg) = neg {
                add(&mut row[neg], &-coeff);
            }
        }
        row
    }

    fn cost_vector(&self, objective: &[(usize, Rational)], width: usize) -> Vec<BigInt> {
        let (cost, _) = to_integers(&self.spread(objective, width), &Rational::zero());
        cost
    }

    fn extract(&self, tableau: &Tableau) -> Vec<Rational> {
        let mut column_values = vec![BigInt::zero(); tableau.width];
        for (r, &b) in tableau.basis.iter().enumerate() {
            column_values[b] = tableau.rhs[r].clone();
        }
        let value = |n: BigInt| Rational::new(n, tableau.det.clone());
        self.var_cols
            .iter()
            .map(|&(pos, neg)| match neg {
                Some(neg) => value(&column_values[pos] - &column_values[neg]),
                None => value(column_values[pos].clone()),
            })
            .collect()
    }
}

/// Multiplies a row and its right-hand side by the least common
/// denominator of their entries.
fn to_integers(row: &[Rational], rhs: &Rational) -> (Vec<BigInt>, BigInt) {
    let mut lcm = rhs.denom().clone();
    for v in row.iter().filter(|v| !v.is_zero()) {
        if !(&lcm % v.denom()).is_zero() {
            lcm = lcm.lcm(v.denom());
        }
    }
    let scale = |v: &Rational| v.numer() * (&lcm / v.denom());
    (row.iter().map(scale).collect(), scale(rhs))
}

/// Consecutive degenerate pivots after which entering columns are chosen
/// by Bland's rule instead of by most negative reduced cost. Cycling needs
/// an unbroken run of degenerate pivots, and Bland's rule cannot cycle, so
/// the method still terminates.
const DEGENERATE_STREAK_LIMIT: usize = 16;

/// Fraction-free tableau. Rows are scaled to integers once, and every
/// stored entry is the true tableau entry times `det`, the absolute
/// determinant of the current basis in those rows. A pivot then needs
/// only products and exact divisions by the old `det`, never a gcd.
struct Tableau {
    rows: Vec<Vec<BigInt>>,
    rhs: Vec<BigInt>,
    det: BigInt,
    basis: Vec<usize>,
    /// Columns that may still enter the basis.
    allowed: Vec<bool>,
    width: usize,
    first_artificial: usize,
}

/// Reduced costs and the negated objective value, both times a common
/// positive factor, kept up to date like an extra tableau row.
struct CostRow {
    reduced: Vec<BigInt>,
    neg_value: BigInt,
}

impl Tableau {
    fn build(problem: &FeasibilityProblem, layout: &ColumnLayout) -> Self {
        let m = problem.constraints.len();
        let width = layout.structural + m;
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for (i, c) in problem.constraints.iter().enumerate() {
            let mut row = layout.spread(&c.coeffs, width);
            if let Some((col, positive)) = layout.slack_cols[i] {
                row[col] = Rational::from_integer(if positive { 1 } else { -1 }.into());
            }
            let (mut row, mut b) = to_integers(&row, &c.rhs);
            if b.is_negative() {
                for v in row.iter_mut() {
                    *v = -std::mem::take(v);
                }
                b = -b;
            }
            row[layout.structural + i] = BigInt::one();
            rows.push(row);
            rhs.push(b);
        }
        let basis = (0..m).map(|i| layout.structural + i).collect();
        let mut allowed = vec![true; width];
        for a in allowed.iter_mut().skip(layout.structural) {
            *a = false;
        }
        Self {
            rows,
            rhs,
            det: BigInt::one(),
            basis,
            allowed,
            width,
            first_artificial: layout.structural,
        }
    }

    /// Drives the artificial variables to zero. Returns false if impossible.
    fn phase_one(&mut self) -> bool {
        let mut cost = vec![BigInt::zero(); self.width];
        for c in cost.iter_mut().skip(self.first_artificial) {
            *c = BigInt::one();
        }
        // Artificial columns start basic with zero reduced cost and are
        // never allowed to re-enter.
        let mut row = self.cost_row(&cost);
        if self.run_simplex(&mut row).is_err() {
            unreachable!("phase one objective is bounded below by zero");
        }
        if row.neg_value.is_negative() {
            return false;
        }
        // Pivot remaining zero-level artificials out of the basis, dropping
        // rows that turn out to be redundant.
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.first_artificial {
                let entering = (0..self.first_artificial).find(|&j| !self.rows[r][j].is_zero());
                match entering {
                    Some(c) => {
                        self.pivot(r, c, None);
                        r += 1;
                    }
                    None => {
                        self.rows.swap_remove(r);
                        self.rhs.swap_remove(r);
                        self.basis.swap_remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        true
    }

    /// Minimizes `cost` over the current face, then freezes every column
    /// whose reduced cost is strictly positive at the optimum.
    fn optimize(&mut self, cost: &[BigInt]) -> Result<(), ()> {
        let mut row = self.cost_row(cost);
        self.run_simplex(&mut row)?;
        for j in 0..self.width {
            if row.reduced[j].is_positive() {
                self.allowed[j] = false;
            }
        }
        Ok(())
    }

    fn cost_row(&self, cost: &[BigInt]) -> CostRow {
        let mut reduced: Vec<BigInt> = cost.iter().map(|c| c * &self.det).collect();
        let mut neg_value = BigInt::zero();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (j, a) in self.rows[r].iter().enumerate() {
                if !a.is_zero() {
                    reduced[j] -= cb * a;
                }
            }
            neg_value -= cb * &self.rhs[r];
        }
        CostRow { reduced, neg_value }
    }

    fn run_simplex(&mut self, cost: &mut CostRow) -> Result<(), ()> {
        let mut degenerate_streak = 0;
        loop {
            let mut is_basic = vec![false; self.width];
            for &b in &self.basis {
                is_basic[b] = true;
            }
            let reduced = &cost.reduced;
            let candidates = (0..self.width).filter(|&j| self.allowed[j] && !is_basic[j] && reduced[j].is_negative());
            let entering = if degenerate_streak < DEGENERATE_STREAK_LIMIT {
                candidates.min_by(|&a, &b| reduced[a].cmp(&reduced[b]))
            } else {
                candidates.min()
            };
            let Some(c) = entering else {
                return Ok(());
            };
            // Ratios rhs / a over rows with a > 0, compared crosswise.
            let mut leaving: Option<usize> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][c];
                if !a.is_positive() {
                    continue;
                }
                let better = match leaving {
                    None => true,
                    Some(s) => {
                        let lhs = &self.rhs[r] * &self.rows[s][c];
                        let rhs = &self.rhs[s] * a;
                        lhs < rhs || (lhs == rhs && self.basis[r] < self.basis[s])
                    }
                };
                if better {
                    leaving = Some(r);
                }
            }
            let Some(r) = leaving else {
                return Err(());
            };
            if self.rhs[r].is_zero() {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, c, Some(cost));
        }
    }

    fn pivot(&mut self, r: usize, c: usize, cost: Option<&mut CostRow>) {
        let pivot = self.rows[r][c].clone();
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let pivot_rhs = self.rhs[r].clone();
        let det = std::mem::replace(&mut self.det, BigInt::one());
        let unit = det.is_one();
        // new = (pivot · old - factor · pivot_row) / det, exactly.
        let update = |entry: &mut BigInt, factor: &BigInt, p: &BigInt| {
            let mut v = &pivot * &*entry;
            if !factor.is_zero() && !p.is_zero() {
                v -= factor * p;
            }
            *entry = if unit { v } else { v / &det };
        };
        let eliminate = |row: &mut [BigInt], rhs: &mut BigInt| {
            let factor = row[c].clone();
            for (entry, p) in row.iter_mut().zip(&pivot_row) {
                if !entry.is_zero() || (!factor.is_zero() && !p.is_zero()) {
                    update(entry, &factor, p);
                }
            }
            update(rhs, &factor, &pivot_rhs);
        };
        for i in 0..self.rows.len() {
            if i != r {
                eliminate(&mut self.rows[i], &mut self.rhs[i]);
            }
        }
        let mut cost = cost;
        if let Some(cost) = cost.as_deref_mut() {
            eliminate(&mut cost.reduced, &mut cost.neg_value);
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
        self.det = pivot;
        if self.det.is_negative() {
            self.det = -std::mem::take(&mut self.det);
            for v in self.rows.iter_mut().flatten().chain(self.rhs.iter_mut()) {
                *v = -std::mem::take(v);
            }
            if let Some(cost) = cost {
                for v in cost.reduced.iter_mut().chain(std::iter::once(&mut cost.neg_value)) {
                    *v = -std::mem::take(v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rational::{int, rational};

    fn one() -> Rational {
        int(1)
    }

    #[test]
    fn minimizes_on_simplex_boundary() {
        // minimize x subject to x + y = 1, x, y >= 0.
        let mut p = FeasibilityProblem::new(2);
        p.add_eq(vec![(0, one()), (1, one())], one());
        p.minimize_var(0);
        let x = lp_solve(&p).unwrap().into_assignment().unwrap();
        assert_eq!(x, vec![int(0), int(1)]);
        assert!(p.is_satisfied_by(&x));
    }

    #[test]
    fn contradictory_constraints_are_infeasible() {
        // x + y = 1, x >= 2, y >= 0.
        let mut p = FeasibilityProblem::new(2);
        p.add_eq(vec![(0, one()), (1, one())], one());
        p.add_constraint(vec![(0, one())], Relation::Ge, int(2));
        assert_eq!(lp_solve(&p).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn free_variables_can_go_negative() {
        // minimize z subject to z >= -5/2, z free.
        let mut p = FeasibilityProblem::new(1);
        p.set_free(0);
        p.add_constraint(vec![(0, one())], Relation::Ge, rational(-5, 2));
        p.minimize_var(0);
        assert_eq!(lp_solve(&p).unwrap(), LpOutcome::Feasible(vec![rational(-5, 2)]));
    }

    #[test]
    fn unbounded_objective_is_an_error() {
        let mut p = FeasibilityProblem::new(1);
        p.set_free(0);
        p.add_constraint(vec![(0, one())], Relation::Le, int(3));
        p.minimize_var(0);
        assert_eq!(lp_solve(&p), Err(LpError::Unbounded(0)));
    }

    #[test]
    fn lexicographic_objectives_break_ties() {
        // Feasible region: x + y >= 1, x <= 1, y <= 1, x >= 0, y >= 0.
        // min x gives the segment x = 0, y in [1, 1]; add a looser region.
        let mut p = FeasibilityProblem::new(2);
        p.add_constraint(vec![(0, one()), (1, one())], Relation::Ge, int(1));
        p.add_constraint(vec![(0, one())], Relation::Le, int(1));
        p.add_constraint(vec![(1, one())], Relation::Le, int(3));
        // minimize 0 (ties everywhere), then minimize -y (maximize y), then x.
        p.minimize(vec![]);
        p.minimize(vec![(1, int(-1))]);
        p.minimize_var(0);
        let x = lp_solve(&p).unwrap().into_assignment().unwrap();
        assert_eq!(x, vec![int(0), int(3)]);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = FeasibilityProblem::new(2);
        p.add_eq(vec![(0, one()), (1, one())], one());
        p.add_eq(vec![(0, int(2)), (1, int(2))], int(2));
        p.minimize_var(1);
        let x = lp_solve(&p).unwrap().into_assignment().unwrap();
        assert_eq!(x, vec![int(1), int(0)]);
    }

    #[test]
    fn malformed_variable_index_is_rejected() {
        let mut p = FeasibilityProblem::new(1);
        p.add_eq(vec![(3, one())], one());
        assert!(matches!(lp_solve(&p), Err(LpError::Malformed(_))));
    }
}
