//! Scenario configuration, population bounds and convergence bookkeeping.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::combinatorics::binomial;
use crate::geom::{Rational, RationalPoint};

pub type ProcessId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExactSync,
    ApproxAsync,
    RestrictedSync,
    RestrictedAsync,
}

impl Mode {
    pub fn is_synchronous(self) -> bool {
        matches!(self, Mode::ExactSync | Mode::RestrictedSync)
    }

    pub fn is_approximate(self) -> bool {
        !matches!(self, Mode::ExactSync)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::ExactSync => "exact_sync",
            Mode::ApproxAsync => "approx_async",
            Mode::RestrictedSync => "restricted_sync",
            Mode::RestrictedAsync => "restricted_async",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step2Mode {
    #[default]
    AllSubsets,
    WitnessOptimized,
}

/// Behaviour assigned to a process listed in the fault map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Honest until the given round, silent from then on.
    Crash { round: u64 },
    /// Sends nothing at all.
    Mute,
    /// Every point it sends is replaced by `point`.
    FixedLie { point: RationalPoint },
    /// Receiver `j` sees `points[j % points.len()]` in place of every point.
    Equivocate { points: Vec<RationalPoint> },
    /// Honest, but every message it sends is held back until all other
    /// non-faulty processes have decided. Asynchronous modes only.
    Starve,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Crash { .. } => "crash",
            Strategy::Mute => "mute",
            Strategy::FixedLie { .. } => "fixed-lie",
            Strategy::Equivocate { .. } => "equivocate",
            Strategy::Starve => "starve",
        }
    }

    /// Whether the process deviates from the protocol. A starved process is
    /// slow, not faulty.
    pub fn is_byzantine(&self) -> bool {
        !matches!(self, Strategy::Starve)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatePrecision {
    /// States are kept as exact rationals for the whole run.
    Exact,
    /// Once a state coordinate's denominator exceeds `threshold_bits`, it is
    /// rounded to a dyadic grid at least `2^guard_bits` times finer than the
    /// spread of the round's `Z` in that coordinate, provided the rounded
    /// point still lies in the hull of `Z`.
    Settled { threshold_bits: u64, guard_bits: u64 },
}

impl Default for StatePrecision {
    fn default() -> Self {
        StatePrecision::Settled {
            threshold_bits: 256,
            guard_bits: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub epsilon: Rational,
    /// `ν`, the lower bound on every input coordinate.
    pub lower: Rational,
    /// `U`, the upper bound on every input coordinate.
    pub upper: Rational,
    pub mode: Mode,
    pub step2: Step2Mode,
    pub faulty: BTreeMap<ProcessId, Strategy>,
    pub seed: u64,
    /// Run even if `n` is below the mode's bound; the run is tagged unsafe.
    pub allow_unsafe: bool,
    /// Broadcast each coordinate through its own agreement instance instead
    /// of one instance per point.
    pub element_wise: bool,
    /// Value used for silent or malformed contributions. Defaults to the
    /// all-`ν` point.
    pub default_point: Option<RationalPoint>,
    pub precision: StatePrecision,
    pub event_cap: usize,
}

pub const DEFAULT_EVENT_CAP: usize = 1_000_000;

impl ScenarioConfig {
    pub fn new(mode: Mode, n: usize, f: usize, d: usize) -> Self {
        Self {
            name: format!("{}-n{n}-f{f}-d{d}", mode.name()),
            n,
            f,
            d,
            epsilon: Rational::one(),
            lower: Rational::zero(),
            upper: Rational::one(),
            mode,
            step2: Step2Mode::AllSubsets,
            faulty: BTreeMap::new(),
            seed: 0,
            allow_unsafe: false,
            element_wise: false,
            default_point: None,
            precision: StatePrecision::default(),
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    pub fn default_value(&self) -> RationalPoint {
        self.default_point
            .clone()
            .unwrap_or_else(|| RationalPoint::splat(self.d, self.lower.clone()))
    }

    pub fn is_byzantine(&self, id: ProcessId) -> bool {
        self.faulty.get(&id).is_some_and(Strategy::is_byzantine)
    }

    /// Processes that follow the protocol, slow ones included.
    pub fn non_faulty(&self) -> Vec<ProcessId> {
        (0..self.n).filter(|&i| !self.is_byzantine(i)).collect()
    }

    pub fn starved(&self) -> Vec<ProcessId> {
        self.faulty
            .iter()
            .filter(|(_, s)| matches!(s, Strategy::Starve))
            .map(|(&i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{mode} requires {inequality}; got n = {n}, needs n >= {required}")]
    BoundViolation {
        mode: &'static str,
        inequality: String,
        n: usize,
        required: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("process {process}: expected {expected} coordinates, found {found}")]
    InputDimension {
        process: ProcessId,
        expected: usize,
        found: usize,
    },
    #[error("process {process}: coordinate {coord} = {value} lies outside [{lower}, {upper}]")]
    InputOutOfRange {
        process: ProcessId,
        coord: usize,
        value: Rational,
        lower: Rational,
        upper: Rational,
    },
    #[error("expected {expected} inputs, found {found}")]
    InputCount { expected: usize, found: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provisioning {
    Safe,
    /// The bound is violated but the run was allowed by the override.
    Unsafe(ConfigError),
}

impl Provisioning {
    pub fn is_safe(&self) -> bool {
        matches!(self, Provisioning::Safe)
    }
}

/// Smallest `n` for which the mode's algorithm is guaranteed to work.
pub fn required_processes(mode: Mode, d: usize, f: usize) -> usize {
    match mode {
        Mode::ExactSync => (3 * f + 1).max((d + 1) * f + 1),
        Mode::ApproxAsync | Mode::RestrictedSync => (d + 2) * f + 1,
        Mode::RestrictedAsync => (d + 4) * f + 1,
    }
}

fn bound_text(mode: Mode) -> &'static str {
    match mode {
        Mode::ExactSync => "n >= max(3f+1, (d+1)f+1)",
        Mode::ApproxAsync | Mode::RestrictedSync => "n >= (d+2)f+1",
        Mode::RestrictedAsync => "n >= (d+4)f+1",
    }
}

pub fn validate_config(cfg: &ScenarioConfig) -> Result<Provisioning, ConfigError> {
    let invalid = |msg: String| Err(ConfigError::InvalidParameter(msg));
    if cfg.n == 0 {
        return invalid("n must be at least 1".into());
    }
    if cfg.f >= cfg.n {
        return invalid(format!("f = {} must be smaller than n = {}", cfg.f, cfg.n));
    }
    if cfg.d == 0 {
        return invalid("d must be at least 1".into());
    }
    if !cfg.epsilon.is_positive() {
        return invalid(format!("epsilon = {} must be positive", cfg.epsilon));
    }
    if cfg.mode.is_approximate() && cfg.lower >= cfg.upper {
        return invalid(format!(
            "lower bound {} must be below upper bound {}",
            cfg.lower, cfg.upper
        ));
    }
    if cfg.faulty.len() > cfg.f {
        return invalid(format!(
            "{} processes listed as faulty but f = {}",
            cfg.faulty.len(),
            cfg.f
        ));
    }
    if let Some(&id) = cfg.faulty.keys().find(|&&id| id >= cfg.n) {
        return invalid(format!("faulty process id {id} out of range 0..{}", cfg.n));
    }
    if cfg.mode.is_synchronous() && !cfg.starved().is_empty() {
        return invalid("the starve schedule only exists in asynchronous modes".into());
    }
    if let Some(p) = &cfg.default_point {
        if p.dim() != cfg.d {
            return invalid(format!("default point has {} coordinates, expected {}", p.dim(), cfg.d));
        }
    }
    for (id, strategy) in &cfg.faulty {
        let points: Vec<&RationalPoint> = match strategy {
            Strategy::FixedLie { point } => vec![point],
            Strategy::Equivocate { points } if points.is_empty() => {
                return invalid(format!("process {id}: equivocate needs at least one point"));
            }
            Strategy::Equivocate { points } => points.iter().collect(),
            _ => vec![],
        };
        if let Some(p) = points.iter().find(|p| p.dim() != cfg.d) {
            return invalid(format!("process {id}: strategy point {p} is not {}-dimensional", cfg.d));
        }
    }
    let required = required_processes(cfg.mode, cfg.d, cfg.f);
    if cfg.n >= required {
        return Ok(Provisioning::Safe);
    }
    let violation = ConfigError::BoundViolation {
        mode: cfg.mode.name(),
        inequality: bound_text(cfg.mode).to_string(),
        n: cfg.n,
        required,
    };
    if cfg.allow_unsafe {
        Ok(Provisioning::Unsafe(violation))
    } else {
        Err(violation)
    }
}

/// Checks input count and dimension, and for approximate modes that every
/// non-faulty input lies in `[ν, U]^d`. Faulty inputs are unconstrained.
pub fn validate_inputs(cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<(), ConfigError> {
    if inputs.len() != cfg.n {
        return Err(ConfigError::InputCount {
            expected: cfg.n,
            found: inputs.len(),
        });
    }
    for (process, x) in inputs.iter().enumerate() {
        if x.dim() != cfg.d {
            return Err(ConfigError::InputDimension {
                process,
                expected: cfg.d,
                found: x.dim(),
            });
        }
        if !cfg.mode.is_approximate() || cfg.is_byzantine(process) {
            continue;
        }
        if let Some((coord, value)) = x
            .coords()
            .iter()
            .enumerate()
            .find(|(_, c)| **c < cfg.lower || **c > cfg.upper)
        {
            return Err(ConfigError::InputOutOfRange {
                process,
                coord,
                value: value.clone(),
                lower: cfg.lower.clone(),
                upper: cfg.upper.clone(),
            });
        }
    }
    Ok(())
}

/// `1/(n·C(n, n−f))` for the exhaustive Step 2, `1/n²` for the witness one.
pub fn compute_gamma(n: usize, f: usize, step2: Step2Mode) -> Rational {
    assert!(n > 1 && f < n, "compute_gamma needs n > 1 and f < n");
    match step2 {
        Step2Mode::AllSubsets => subset_gamma(n, n, n - f),
        Step2Mode::WitnessOptimized => Rational::new(BigInt::one(), BigInt::from(n * n)),
    }
}

/// `1/(n·C(slots, subset))`: one over the number of processes times the
/// number of subsets each process averages over.
pub fn subset_gamma(n: usize, slots: usize, subset: usize) -> Rational {
    let count = binomial(slots as u64, subset as u64);
    Rational::new(BigInt::one(), BigInt::from(n) * BigInt::from(count))
}

/// Least `k >= 0` with `(1/(1−γ))^k >= ratio`.
pub fn contraction_steps(gamma: &Rational, ratio: &Rational) -> u64 {
    if *ratio <= Rational::one() {
        return 0;
    }
    assert!(
        gamma.is_positive() && *gamma < Rational::one(),
        "gamma must lie in (0, 1)"
    );
    let base = Rational::one() / (Rational::one() - gamma);
    let reaches = |k: u64| num_traits::pow(base.clone(), k as usize) >= *ratio;
    // Exponential search for an upper bound, then bisection.
    let mut hi = 1;
    while !reaches(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if reaches(lo) {
        lo
    } else {
        hi
    }
}

/// `max(1, 1 + ⌈log_{1/(1−γ)}((U−ν)/ε)⌉)`, exactly.
pub fn round_bound(lower: &Rational, upper: &Rational, epsilon: &Rational, gamma: &Rational) -> u64 {
    if *gamma >= Rational::one() {
        return 1;
    }
    let ratio = (upper - lower) / epsilon;
    1 + contraction_steps(gamma, &ratio)
}

pub fn termination_rounds(cfg: &ScenarioConfig, gamma: &Rational) -> u64 {
    round_bound(&cfg.lower, &cfg.upper, &cfg.epsilon, gamma)
}

/// Per-coordinate maximum `Ω_l`, minimum `μ_l` and spread `ρ_l = Ω_l − μ_l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpreadMetrics {
    pub max: Vec<Rational>,
    pub min: Vec<Rational>,
    pub rho: Vec<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SpreadError {
    #[error("spread of an empty set of states")]
    Empty,
    #[error("states have different dimensions")]
    DimensionMismatch,
}

pub fn spread<'a, I>(states: I) -> Result<SpreadMetrics, SpreadError>
where
    I: IntoIterator<Item = &'a RationalPoint>,
{
    let mut iter = states.into_iter();
    let first = iter.next().ok_or(SpreadError::Empty)?;
    let mut max = first.coords().to_vec();
    let mut min = first.coords().to_vec();
    for p in iter {
        if p.dim() != max.len() {
            return Err(SpreadError::DimensionMismatch);
        }
        for (l, c) in p.coords().iter().enumerate() {
            if *c > max[l] {
                max[l] = c.clone();
            }
            if *c < min[l] {
                min[l] = c.clone();
            }
        }
    }
    let rho = max.iter().zip(&min).map(|(a, b)| a - b).collect();
    Ok(SpreadMetrics { max, min, rho })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessState {
    pub id: ProcessId,
    pub v: RationalPoint,
    pub round: u64,
    pub decided: Option<RationalPoint>,
}

impl ProcessState {
    pub fn new(id: ProcessId, input: RationalPoint) -> Self {
        Self {
            id,
            v: input,
            round: 0,
            decided: None,
        }
    }

    pub fn advance(&mut self, v: RationalPoint) {
        self.v = v;
        self.round += 1;
    }
}

/// `B_i[t]`: at most one `(sender, point)` tuple per sender, all for one round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TupleSet {
    pub round: u64,
    entries: BTreeMap<ProcessId, RationalPoint>,
}

impl TupleSet {
    pub fn new(round: u64) -> Self {
        Self {
            round,
            entries: BTreeMap::new(),
        }
    }

    /// Adds the tuple unless the sender already has one. Returns whether it
    /// was added.
    pub fn insert(&mut self, sender: ProcessId, point: RationalPoint) -> bool {
        if self.entries.contains_key(&sender) {
            return false;
        }
        self.entries.insert(sender, point);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sender: ProcessId) -> Option<&RationalPoint> {
        self.entries.get(&sender)
    }

    pub fn contains(&self, sender: ProcessId, point: &RationalPoint) -> bool {
        self.entries.get(&sender) == Some(point)
    }

    /// Tuples in ascending sender order.
    pub fn iter(&self) -> impl Iterator<Item = (ProcessId, &RationalPoint)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn senders(&self) -> Vec<ProcessId> {
        self.entries.keys().copied().collect()
    }

    /// Number of identical tuples held by both sets.
    pub fn common(&self, other: &TupleSet) -> usize {
        self.iter().filter(|(k, p)| other.contains(*k, p)).count()
    }
}

impl FromIterator<(ProcessId, RationalPoint)> for TupleSet {
    fn from_iter<T: IntoIterator<Item = (ProcessId, RationalPoint)>>(iter: T) -> Self {
        let mut set = TupleSet::default();
        for (k, p) in iter {
            set.insert(k, p);
        }
        set
    }
}

impl fmt::Display for TupleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, p)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "p{k}: {p}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rational::{int, rational};

    #[test]
    fn gamma_values() {
        assert_eq!(compute_gamma(4, 1, Step2Mode::AllSubsets), rational(1, 16));
        assert_eq!(compute_gamma(4, 1, Step2Mode::WitnessOptimized), rational(1, 16));
        assert_eq!(compute_gamma(5, 1, Step2Mode::AllSubsets), rational(1, 25));
        assert_eq!(compute_gamma(7, 2, Step2Mode::AllSubsets), rational(1, 147));
    }

    #[test]
    fn round_bound_examples() {
        let g = rational(1, 16);
        assert_eq!(round_bound(&int(0), &int(1), &int(1), &g), 1);
        assert_eq!(round_bound(&int(0), &int(1), &rational(1, 100), &g), 73);
        assert_eq!(round_bound(&int(0), &int(1), &int(3), &g), 1);
        assert_eq!(contraction_steps(&g, &int(1)), 0);
        // (16/15)^1 = 16/15 exactly reaches the ratio.
        assert_eq!(contraction_steps(&g, &rational(16, 15)), 1);
    }

    #[test]
    fn bound_table() {
        assert_eq!(required_processes(Mode::ExactSync, 3, 1), 5);
        assert_eq!(required_processes(Mode::ExactSync, 1, 2), 7);
        assert_eq!(required_processes(Mode::ApproxAsync, 2, 1), 5);
        assert_eq!(required_processes(Mode::RestrictedAsync, 1, 1), 6);
    }

    #[test]
    fn override_tags_unsafe_runs() {
        let mut cfg = ScenarioConfig::new(Mode::ApproxAsync, 4, 1, 2);
        assert!(matches!(
            validate_config(&cfg),
            Err(ConfigError::BoundViolation { required: 5, .. })
        ));
        cfg.allow_unsafe = true;
        assert!(matches!(validate_config(&cfg), Ok(Provisioning::Unsafe(_))));
    }

    #[test]
    fn spread_of_small_sets() {
        let pts = [RationalPoint::from_ints(&[0, 4]), RationalPoint::from_ints(&[2, 1])];
        assert_eq!(spread(&pts).unwrap().rho, vec![int(2), int(3)]);
        assert_eq!(spread(std::iter::empty()), Err(SpreadError::Empty));
    }

    #[test]
    fn tuple_set_keeps_first_per_sender() {
        let mut b = TupleSet::new(1);
        assert!(b.insert(2, RationalPoint::from_ints(&[1])));
        assert!(!b.insert(2, RationalPoint::from_ints(&[5])));
        assert_eq!(b.get(2), Some(&RationalPoint::from_ints(&[1])));
        let c: TupleSet = [(2, RationalPoint::from_ints(&[1])), (3, RationalPoint::from_ints(&[0]))]
            .into_iter()
            .collect();
        assert_eq!(b.common(&c), 1);
    }
}
