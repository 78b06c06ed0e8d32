//! Trace oracles.
//!
//! Every verdict is recomputed from the journal and delivery log together
//! with global knowledge of the fault map. Nothing a process claims about
//! itself is trusted beyond the values it recorded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::One;
use thiserror::Error;

use crate::approx_async::approx_schedule;
use crate::geom::combinatorics::colex_subsets;
use crate::geom::rational::to_fraction_string;
use crate::geom::{hull_contains, PointMultiset, Rational, RationalPoint};
use crate::model::{spread, Mode, ProcessId, ScenarioConfig, Step2Mode};
use crate::restricted::restricted_schedule;
use crate::simnet::{check_fifo, undelivered, Record, Trace};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    AgreementOk,
    ValidityOk,
    EpsilonOk,
    ContractionOk,
    PropertyFail(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::AgreementOk => f.write_str("AgreementOk"),
            Outcome::ValidityOk => f.write_str("ValidityOk"),
            Outcome::EpsilonOk => f.write_str("EpsilonOk"),
            Outcome::ContractionOk => f.write_str("ContractionOk"),
            Outcome::PropertyFail(details) => write!(f, "PropertyFail({details})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub outcome: Vec<Outcome>,
    /// Names of the audits that were evaluated on this trace.
    pub audits: Vec<&'static str>,
    pub rounds: u64,
    pub gamma: Option<Rational>,
    pub round_bound: Option<u64>,
    /// Per-coordinate spread of the non-faulty decisions.
    pub final_spread: Vec<Rational>,
    pub trace_sha256: String,
}

impl RunSummary {
    pub fn all_ok(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<&str> {
        self.outcome
            .iter()
            .filter_map(|o| match o {
                Outcome::PropertyFail(d) => Some(d.as_str()),
                _ => None,
            })
            .collect()
    }

    /// True if `audit` ran and produced no failure.
    pub fn passed(&self, audit: &str) -> bool {
        let prefix = format!("{audit}:");
        self.audits.contains(&audit) && !self.failures().iter().any(|f| f.starts_with(&prefix))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("malformed trace: {0}")]
    Malformed(String),
}

type Tuples = Vec<(ProcessId, RationalPoint)>;

/// Journal contents of the non-faulty processes, indexed for the oracles.
#[derive(Default)]
struct Journal {
    states: BTreeMap<u64, BTreeMap<ProcessId, RationalPoint>>,
    bsets: BTreeMap<u64, BTreeMap<ProcessId, Tuples>>,
    witnesses: BTreeMap<u64, BTreeMap<ProcessId, Vec<(ProcessId, Tuples)>>>,
    zs: BTreeMap<u64, BTreeMap<ProcessId, Vec<RationalPoint>>>,
    agreed: BTreeMap<ProcessId, Vec<RationalPoint>>,
    decisions: BTreeMap<ProcessId, RationalPoint>,
}

fn once<V>(map: &mut BTreeMap<ProcessId, V>, p: ProcessId, v: V, what: &str) -> Result<(), CheckError> {
    if map.insert(p, v).is_some() {
        return Err(CheckError::Malformed(format!("process {p} recorded {what} twice")));
    }
    Ok(())
}

impl Journal {
    fn read(trace: &Trace, cfg: &ScenarioConfig) -> Result<Self, CheckError> {
        let mut j = Journal::default();
        let dim_ok = |p: &RationalPoint, what: &str, process: ProcessId| {
            if p.dim() == cfg.d {
                Ok(())
            } else {
                Err(CheckError::Malformed(format!(
                    "process {process}: {what} has dimension {}",
                    p.dim()
                )))
            }
        };
        for entry in &trace.journal {
            let p = entry.process;
            if p >= cfg.n {
                return Err(CheckError::Malformed(format!("journal entry for unknown process {p}")));
            }
            if cfg.is_byzantine(p) {
                continue;
            }
            match &entry.record {
                Record::State { round, value } => {
                    dim_ok(value, "state", p)?;
                    once(
                        j.states.entry(*round).or_default(),
                        p,
                        value.clone(),
                        &format!("state {round}"),
                    )?;
                }
                Record::BSet { round, tuples } => {
                    once(
                        j.bsets.entry(*round).or_default(),
                        p,
                        tuples.clone(),
                        &format!("tuple set {round}"),
                    )?;
                }
                Record::Witnesses { round, reports } => {
                    once(
                        j.witnesses.entry(*round).or_default(),
                        p,
                        reports.clone(),
                        &format!("witnesses {round}"),
                    )?;
                }
                Record::Z { round, points } => {
                    once(
                        j.zs.entry(*round).or_default(),
                        p,
                        points.clone(),
                        &format!("Z {round}"),
                    )?;
                }
                Record::Agreed { multiset } => once(&mut j.agreed, p, multiset.clone(), "the agreed multiset")?,
                Record::Decide { value } => {
                    dim_ok(value, "decision", p)?;
                    once(&mut j.decisions, p, value.clone(), "a decision")?;
                }
                Record::RbcDeliver { .. } | Record::EigResolve { .. } => {}
            }
        }
        Ok(j)
    }
}

struct Checker<'a> {
    cfg: &'a ScenarioConfig,
    inputs: &'a [RationalPoint],
    non_faulty: Vec<ProcessId>,
    outcome: Vec<Outcome>,
    audits: Vec<&'static str>,
}

impl Checker<'_> {
    /// Runs one audit: `Ok` pushes the success outcome if there is one,
    /// `Err` pushes a failure tagged with the audit name.
    fn audit(&mut self, name: &'static str, ok: Option<Outcome>, result: Result<(), String>) {
        self.audits.push(name);
        match result {
            Ok(()) => self.outcome.extend(ok),
            Err(details) => self.outcome.push(Outcome::PropertyFail(format!("{name}: {details}"))),
        }
    }

    fn honest_inputs(&self) -> PointMultiset {
        self.non_faulty.iter().map(|&i| self.inputs[i].clone()).collect()
    }

    fn pairs(&self) -> Vec<(ProcessId, ProcessId)> {
        let ids = &self.non_faulty;
        (0..ids.len())
            .flat_map(|a| ((a + 1)..ids.len()).map(move |b| (ids[a], ids[b])))
            .collect()
    }
}

fn in_hull(set: &PointMultiset, p: &RationalPoint) -> Result<bool, String> {
    hull_contains(set, p).map_err(|e| e.to_string())
}

fn schedule(cfg: &ScenarioConfig) -> Option<(Rational, u64)> {
    match cfg.mode {
        Mode::ExactSync => None,
        Mode::ApproxAsync => Some(approx_schedule(cfg)),
        Mode::RestrictedSync | Mode::RestrictedAsync => Some(restricted_schedule(cfg)),
    }
}

fn termination(c: &Checker, j: &Journal) -> Result<(), String> {
    let undecided: Vec<_> = c.non_faulty.iter().filter(|i| !j.decisions.contains_key(i)).collect();
    if undecided.is_empty() {
        Ok(())
    } else {
        Err(format!("processes {undecided:?} did not decide"))
    }
}

fn exact_agreement(j: &Journal) -> Result<(), String> {
    let mut values = j.decisions.iter();
    if let Some((p, first)) = values.next() {
        if let Some((q, other)) = values.find(|(_, v)| *v != first) {
            return Err(format!("process {p} decided {first} but process {q} decided {other}"));
        }
    }
    Ok(())
}

fn epsilon_agreement(cfg: &ScenarioConfig, j: &Journal) -> Result<(), String> {
    let Ok(s) = spread(j.decisions.values()) else {
        return Ok(());
    };
    match s.rho.iter().position(|r| *r > cfg.epsilon) {
        Some(l) => Err(format!(
            "decisions differ by {} in coordinate {l}",
            to_fraction_string(&s.rho[l])
        )),
        None => Ok(()),
    }
}

fn decision_validity(c: &Checker, j: &Journal) -> Result<(), String> {
    let hull = c.honest_inputs();
    for (p, v) in &j.decisions {
        if !in_hull(&hull, v)? {
            return Err(format!(
                "decision {v} of process {p} is outside the hull of non-faulty inputs"
            ));
        }
    }
    Ok(())
}

/// Inputs recorded as round-0 states match the configured ones, and every
/// state of round `t` lies in the hull of the non-faulty states of `t − 1`.
fn round_validity(c: &Checker, j: &Journal) -> Result<(), String> {
    if let Some(first) = j.states.get(&0) {
        for (p, v) in first {
            if *v != c.inputs[*p] {
                return Err(format!("process {p} started from {v}, not its input"));
            }
        }
    }
    for (t, states) in j.states.range(1..) {
        let previous: PointMultiset = j
            .states
            .get(&(t - 1))
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default();
        if previous.is_empty() {
            return Err(format!("round {t} has states but round {} has none", t - 1));
        }
        for (p, v) in states {
            if !in_hull(&previous, v)? {
                return Err(format!(
                    "state {v} of process {p} in round {t} leaves the previous hull"
                ));
            }
        }
    }
    Ok(())
}

fn complete_rounds<'j>(c: &Checker, j: &'j Journal) -> Vec<(u64, &'j BTreeMap<ProcessId, RationalPoint>)> {
    j.states
        .iter()
        .filter(|(_, m)| c.non_faulty.iter().all(|p| m.contains_key(p)))
        .map(|(t, m)| (*t, m))
        .collect()
}

fn contraction(c: &Checker, j: &Journal, gamma: &Rational) -> Result<(), String> {
    let factor = Rational::one() - gamma;
    let rounds = complete_rounds(c, j);
    for pair in rounds.windows(2) {
        let ((t0, before), (t1, after)) = (pair[0], pair[1]);
        if t1 != t0 + 1 {
            continue;
        }
        let rho0 = spread(before.values()).map_err(|e| e.to_string())?.rho;
        let rho1 = spread(after.values()).map_err(|e| e.to_string())?.rho;
        for (l, (a, b)) in rho0.iter().zip(&rho1).enumerate() {
            if *b > &factor * a {
                return Err(format!(
                    "round {t1} coordinate {l}: spread {} exceeds (1-γ)·{}",
                    to_fraction_string(b),
                    to_fraction_string(a)
                ));
            }
        }
    }
    Ok(())
}

/// Round `R` states of all non-faulty processes are within `ε` (strictly)
/// and each decision is the process's round-`R` state.
fn final_epsilon(c: &Checker, j: &Journal, bound: u64) -> Result<(), String> {
    let last = j
        .states
        .get(&bound)
        .ok_or_else(|| format!("no states recorded for round {bound}"))?;
    if let Some(p) = c.non_faulty.iter().find(|p| !last.contains_key(p)) {
        return Err(format!("process {p} has no round-{bound} state"));
    }
    if j.states.range(bound + 1..).next().is_some() {
        return Err(format!("states recorded beyond round {bound}"));
    }
    let rho = spread(last.values()).map_err(|e| e.to_string())?.rho;
    if let Some(l) = rho.iter().position(|r| *r >= c.cfg.epsilon) {
        return Err(format!(
            "round-{bound} spread {} in coordinate {l} is not below ε",
            to_fraction_string(&rho[l])
        ));
    }
    for (p, v) in &j.decisions {
        if last.get(p) != Some(v) {
            return Err(format!(
                "process {p} decided something other than its round-{bound} state"
            ));
        }
    }
    Ok(())
}

fn common_count(a: &Tuples, b: &Tuples, only: impl Fn(ProcessId) -> bool) -> usize {
    a.iter()
        .filter(|(k, v)| only(*k) && b.iter().any(|(k2, v2)| k2 == k && v2 == v))
        .count()
}

/// Properties 2 and 3 on every tuple set, then the pairwise overlap: all
/// tuples for the witness-based rounds, non-faulty senders only for the
/// restricted ones.
fn tuple_sets(c: &Checker, j: &Journal) -> Result<(), String> {
    let n = c.cfg.n;
    let f = c.cfg.f;
    let (min_size, overlap, honest_only) = match c.cfg.mode {
        Mode::ApproxAsync => (n - f, n - f, false),
        Mode::RestrictedSync => (n, (c.cfg.d + 1) * f + 1, true),
        _ => (n - f, (c.cfg.d + 1) * f + 1, true),
    };
    for (t, sets) in &j.bsets {
        for (p, b) in sets {
            if b.len() < min_size {
                return Err(format!(
                    "round {t}: process {p} used {} tuples, fewer than {min_size}",
                    b.len()
                ));
            }
            let senders: BTreeSet<_> = b.iter().map(|(k, _)| *k).collect();
            if senders.len() != b.len() {
                return Err(format!("round {t}: process {p} holds two tuples from one sender"));
            }
            for (k, w) in b {
                if *k >= n {
                    return Err(format!("round {t}: process {p} holds a tuple from unknown process {k}"));
                }
                if c.cfg.is_byzantine(*k) {
                    continue;
                }
                let expected = j.states.get(&(t - 1)).and_then(|m| m.get(k));
                if expected != Some(w) {
                    return Err(format!(
                        "round {t}: process {p} holds a tuple from {k} that is not its state"
                    ));
                }
            }
        }
        for (p, q) in c.pairs() {
            let (Some(a), Some(b)) = (sets.get(&p), sets.get(&q)) else {
                continue;
            };
            let common = common_count(a, b, |k| !honest_only || !c.cfg.is_byzantine(k));
            if common < overlap {
                return Err(format!(
                    "round {t}: processes {p} and {q} share {common} tuples, fewer than {overlap}"
                ));
            }
        }
    }
    Ok(())
}

fn common_point(c: &Checker, j: &Journal) -> Result<(), String> {
    for (t, zs) in &j.zs {
        for (p, q) in c.pairs() {
            let (Some(a), Some(b)) = (zs.get(&p), zs.get(&q)) else {
                continue;
            };
            if !a.iter().any(|x| b.contains(x)) {
                return Err(format!("round {t}: Z of processes {p} and {q} have no common point"));
            }
        }
    }
    Ok(())
}

fn witness_sharing(c: &Checker, j: &Journal) -> Result<(), String> {
    for (t, ws) in &j.witnesses {
        for (p, q) in c.pairs() {
            let (Some(a), Some(b)) = (ws.get(&p), ws.get(&q)) else {
                continue;
            };
            if !a.iter().any(|w| b.contains(w)) {
                return Err(format!(
                    "round {t}: processes {p} and {q} share no witness with identical reports"
                ));
            }
        }
    }
    Ok(())
}

fn z_size(c: &Checker, j: &Journal) -> Result<(), String> {
    for (t, zs) in &j.zs {
        if let Some((p, z)) = zs.iter().find(|(_, z)| z.len() > c.cfg.n || z.is_empty()) {
            return Err(format!("round {t}: process {p} averaged {} points", z.len()));
        }
    }
    Ok(())
}

fn delivery(c: &Checker, trace: &Trace) -> Result<(), String> {
    check_fifo(trace)?;
    match undelivered(trace, &c.non_faulty) {
        0 => Ok(()),
        k => Err(format!(
            "{k} messages between non-faulty processes were never delivered"
        )),
    }
}

/// Agreement on `S`, non-faulty entries equal their inputs, the decision
/// lies in every `(|S| − f)`-subset hull, and the run took `f + 2` phases.
fn exact_structure(c: &Checker, j: &Journal, trace: &Trace) -> Result<(), String> {
    let f = c.cfg.f;
    if trace.phases != f as u64 + 2 {
        return Err(format!("run took {} phases instead of {}", trace.phases, f + 2));
    }
    let mut sets = j.agreed.iter();
    let Some((p, s)) = sets.next() else {
        return Err("no agreed multiset recorded".into());
    };
    if let Some((q, _)) = sets.find(|(_, other)| *other != s) {
        return Err(format!("processes {p} and {q} agreed on different multisets"));
    }
    if s.len() != c.cfg.n {
        return Err(format!("agreed multiset has {} entries", s.len()));
    }
    if let Some(k) = c.non_faulty.iter().find(|&&k| s[k] != c.inputs[k]) {
        return Err(format!("entry of non-faulty process {k} differs from its input"));
    }
    let s = PointMultiset::new(s.clone());
    for (p, v) in &j.decisions {
        for idx in colex_subsets(s.len(), s.len() - f) {
            if !in_hull(&s.select(&idx), v)? {
                return Err(format!("decision of process {p} is outside the hull of subset {idx:?}"));
            }
        }
    }
    Ok(())
}

/// Recomputes every verdict for `trace`.
pub fn check_trace(trace: &Trace, cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<RunSummary, CheckError> {
    if inputs.len() != cfg.n {
        return Err(CheckError::Malformed(format!(
            "{} inputs for {} processes",
            inputs.len(),
            cfg.n
        )));
    }
    let j = Journal::read(trace, cfg)?;
    let mut c = Checker {
        cfg,
        inputs,
        non_faulty: cfg.non_faulty(),
        outcome: Vec::new(),
        audits: Vec::new(),
    };
    let schedule = schedule(cfg);

    c.audit("termination", None, termination(&c, &j));
    if cfg.mode == Mode::ExactSync {
        c.audit("agreement", Some(Outcome::AgreementOk), exact_agreement(&j));
        c.audit("validity", Some(Outcome::ValidityOk), decision_validity(&c, &j));
        c.audit("exact", None, exact_structure(&c, &j, trace));
    } else {
        let (gamma, bound) = schedule.clone().expect("approximate modes have a schedule");
        c.audit("agreement", Some(Outcome::AgreementOk), epsilon_agreement(cfg, &j));
        let validity = decision_validity(&c, &j).and_then(|_| round_validity(&c, &j));
        c.audit("validity", Some(Outcome::ValidityOk), validity);
        c.audit("epsilon", Some(Outcome::EpsilonOk), final_epsilon(&c, &j, bound));
        c.audit("contraction", Some(Outcome::ContractionOk), contraction(&c, &j, &gamma));
        c.audit("properties", None, tuple_sets(&c, &j));
        c.audit("common_point", None, common_point(&c, &j));
        if cfg.mode == Mode::ApproxAsync && cfg.step2 == Step2Mode::WitnessOptimized {
            c.audit("witness_sharing", None, witness_sharing(&c, &j));
            c.audit("z_size", None, z_size(&c, &j));
        }
    }
    c.audit("delivery", None, delivery(&c, trace));

    let rounds = if cfg.mode.is_synchronous() {
        trace.phases
    } else {
        j.states.keys().next_back().copied().unwrap_or(0)
    };
    let final_spread = spread(j.decisions.values()).map(|s| s.rho).unwrap_or_default();
    Ok(RunSummary {
        outcome: c.outcome,
        audits: c.audits,
        rounds,
        gamma: schedule.as_ref().map(|s| s.0.clone()),
        round_bound: schedule.map(|s| s.1),
        final_spread,
        trace_sha256: trace.sha256(),
    })
}
