//! Exact-rational computational geometry: LP feasibility, convex-hull
//! membership, the safe-region operator `Γ` and a brute-force Tverberg
//! partition search.

pub mod combinatorics;
pub mod gamma;
pub mod hull;
pub mod lp;
pub mod point;
pub mod rational;
pub mod tverberg;

use thiserror::Error;

pub use gamma::{gamma_contains, gamma_select, gamma_select_with, safe_region_subsets, GammaMemo, GammaMethod};
pub use hull::{hull_contains, hull_intersection_empty, hull_intersection_point};
pub use lp::{lp_solve, FeasibilityProblem, LpError, LpOutcome, Relation};
pub use point::{PointMultiset, RationalPoint};
pub use rational::Rational;
pub use tverberg::{tverberg_oracle, TverbergPartition};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("the intersection of the subset hulls is empty")]
    EmptyIntersection,
    #[error(transparent)]
    Lp(#[from] LpError),
}
