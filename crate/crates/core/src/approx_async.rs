//! Approximate BVC in an asynchronous system.
//!
//! Each round a process reliably broadcasts its state, collects a tuple set
//! with the witness rule, builds `Z` from `Γ` points of subsets of that set
//! and moves to the average of `Z`. After a fixed number of rounds computed
//! from the static bounds it decides its state.

use std::collections::BTreeMap;

use num_traits::Zero;
use thiserror::Error;

use crate::broadcast::{Rbc, RbcKind, RbcMsg, WitnessLedger};
use crate::geom::combinatorics::colex_subsets;
use crate::geom::rational::round_to_dyadic;
use crate::geom::{gamma_contains, hull_contains, GammaMemo, GeomError, PointMultiset, RationalPoint};
use crate::model::{
    compute_gamma, spread, termination_rounds, validate_config, validate_inputs, ConfigError, Mode, ProcessId,
    ScenarioConfig, StatePrecision, Step2Mode, TupleSet,
};
use crate::simnet::{run_simulation, Context, Message, Protocol, ProtocolError, Record, SimError, Trace};
use crate::wire::{Reader, WireError, Writer};

pub const LAYER_REPORT: u8 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApproxMsg {
    Rbc(RbcMsg),
    /// "I added `(origin, value)` to my round-`round` tuple set."
    Report {
        round: u64,
        origin: ProcessId,
        value: RationalPoint,
    },
}

impl Message for ApproxMsg {
    fn round(&self) -> u64 {
        match self {
            ApproxMsg::Rbc(m) => m.round,
            ApproxMsg::Report { round, .. } => *round,
        }
    }

    fn layer(&self) -> u8 {
        match self {
            ApproxMsg::Rbc(m) => m.kind.layer(),
            ApproxMsg::Report { .. } => LAYER_REPORT,
        }
    }

    fn encode(&self) -> Vec<u8> {
        let (round, origin, value) = match self {
            ApproxMsg::Rbc(m) => (m.round, m.origin, &m.value),
            ApproxMsg::Report { round, origin, value } => (*round, *origin, value),
        };
        let mut w = Writer::new();
        w.u64(round).u64(origin as u64).point(value);
        w.finish()
    }

    fn decode(layer: u8, bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let round = r.u64()?;
        let origin = r.u64()? as usize;
        let value = r.point()?;
        r.finish()?;
        Ok(match RbcKind::from_layer(layer) {
            Some(kind) => ApproxMsg::Rbc(RbcMsg {
                kind,
                origin,
                round,
                value,
            }),
            None if layer == LAYER_REPORT => ApproxMsg::Report { round, origin, value },
            None => return Err(WireError::Invalid { what: "layer", at: 0 }),
        })
    }

    fn map_points(&mut self, f: &mut dyn FnMut(&mut RationalPoint)) {
        match self {
            ApproxMsg::Rbc(m) => f(&mut m.value),
            ApproxMsg::Report { value, .. } => f(value),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UpdateError {
    #[error("cannot average an empty multiset")]
    EmptyZ,
}

/// `Z`: one `Γ` point per subset `C` of the tuple set.
///
/// Without witness reports every `subset_size`-subset of `bset` (in sender
/// order, colexicographic) is used. With them, each witness's reported tuples
/// form one `C`, in witness id order, skipping any not contained in `bset`.
pub fn build_z(
    bset: &TupleSet,
    subset_size: usize,
    f: usize,
    witnesses: Option<&[(ProcessId, Vec<(ProcessId, RationalPoint)>)]>,
    memo: &mut GammaMemo,
) -> Result<PointMultiset, GeomError> {
    let mut z = PointMultiset::default();
    match witnesses {
        Some(witnesses) => {
            for (_, c) in witnesses {
                if c.iter().all(|(k, v)| bset.contains(*k, v)) {
                    let y: PointMultiset = c.iter().map(|(_, v)| v.clone()).collect();
                    z.push(memo.select(&y, f)?);
                }
            }
        }
        None => {
            let points: Vec<&RationalPoint> = bset.iter().map(|(_, v)| v).collect();
            for idx in colex_subsets(points.len(), subset_size) {
                let y: PointMultiset = idx.iter().map(|&i| points[i].clone()).collect();
                z.push(memo.select(&y, f)?);
            }
        }
    }
    Ok(z)
}

/// Exact coordinate-wise mean of `Z`.
pub fn round_update(z: &PointMultiset) -> Result<RationalPoint, UpdateError> {
    RationalPoint::mean(z.members()).ok_or(UpdateError::EmptyZ)
}

/// Caps the size of a new state. Coordinates whose denominator is within
/// the threshold stay exact; others are rounded to a dyadic grid at least
/// `2^guard_bits` times finer than the spread of `Z` in that coordinate.
/// The rounded point is kept only if it lies in the hull of `Z` or in
/// `Γ(B)`, which contains that hull since every member of `Z` is `Γ` of a
/// subset of `B`. When `Z` is flat only the second test can pass. The grid
/// is refined twice before falling back to the exact mean.
pub fn settle(
    v: RationalPoint,
    z: &PointMultiset,
    bset: &PointMultiset,
    f: usize,
    precision: StatePrecision,
) -> Result<RationalPoint, GeomError> {
    let StatePrecision::Settled {
        threshold_bits,
        guard_bits,
    } = precision
    else {
        return Ok(v);
    };
    let large = |c: &crate::geom::Rational| c.denom().bits() > threshold_bits;
    if !v.coords().iter().any(large) {
        return Ok(v);
    }
    let rho = spread(z.members())
        .map_err(|e| GeomError::Precondition(e.to_string()))?
        .rho;
    for attempt in 1..=3u64 {
        let coords = v
            .coords()
            .iter()
            .zip(&rho)
            .map(|(c, r)| {
                if !large(c) || r.is_zero() {
                    return c.clone();
                }
                // 2^-shift <= r, so a grid of 2^-(shift + guard) is finer
                // than r by the guard factor.
                let shift = (r.denom().bits() + 1).saturating_sub(r.numer().bits());
                round_to_dyadic(c, (shift + guard_bits * attempt) as u32)
            })
            .collect();
        let q = RationalPoint::new(coords);
        if hull_contains(z, &q)? || gamma_contains(bset, f, &q)? {
            return Ok(q);
        }
    }
    Ok(v)
}

fn geometry(round: u64) -> impl Fn(GeomError) -> ProtocolError {
    move |source| ProtocolError::Geometry { round, source }
}

pub struct ApproxProcess {
    me: ProcessId,
    n: usize,
    f: usize,
    step2: Step2Mode,
    precision: StatePrecision,
    memo: GammaMemo,
    total_rounds: u64,
    rbc: Rbc,
    ledgers: BTreeMap<u64, WitnessLedger>,
    round: u64,
    v: RationalPoint,
    decided: Option<RationalPoint>,
}

impl ApproxProcess {
    pub fn new(cfg: &ScenarioConfig, me: ProcessId, input: RationalPoint, total_rounds: u64) -> Self {
        Self {
            me,
            n: cfg.n,
            f: cfg.f,
            step2: cfg.step2,
            precision: cfg.precision,
            memo: GammaMemo::default(),
            total_rounds,
            rbc: Rbc::new(cfg.n, cfg.f),
            ledgers: BTreeMap::new(),
            round: 1,
            v: input,
            decided: None,
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn ledger(&mut self, round: u64) -> &mut WitnessLedger {
        let (n, f) = (self.n, self.f);
        self.ledgers
            .entry(round)
            .or_insert_with(|| WitnessLedger::new(n, f, round))
    }

    fn open(&self, round: u64) -> bool {
        self.decided.is_none() && round >= self.round && round <= self.total_rounds
    }

    fn on_tuple(&mut self, origin: ProcessId, round: u64, value: RationalPoint, ctx: &mut Context<ApproxMsg>) {
        if self.open(round) && self.ledger(round).add_tuple(origin, value.clone()) {
            ctx.broadcast(ApproxMsg::Report { round, origin, value });
        }
    }

    fn try_advance(&mut self, ctx: &mut Context<ApproxMsg>) -> Result<(), ProtocolError> {
        while self.decided.is_none() {
            let t = self.round;
            let Some(collected) = self.ledger(t).collect_bset() else {
                return Ok(());
            };
            self.ledgers.remove(&t);
            ctx.record(Record::BSet {
                round: t,
                tuples: collected.bset.iter().map(|(k, v)| (k, v.clone())).collect(),
            });
            ctx.record(Record::Witnesses {
                round: t,
                reports: collected.witnesses.clone(),
            });
            let witnesses = match self.step2 {
                Step2Mode::AllSubsets => None,
                Step2Mode::WitnessOptimized => Some(collected.witnesses.as_slice()),
            };
            let z =
                build_z(&collected.bset, self.n - self.f, self.f, witnesses, &mut self.memo).map_err(geometry(t))?;
            ctx.record(Record::Z {
                round: t,
                points: z.members().to_vec(),
            });
            let mean = round_update(&z).map_err(|e| ProtocolError::Invariant(e.to_string()))?;
            let b: PointMultiset = collected.bset.iter().map(|(_, v)| v.clone()).collect();
            let v = settle(mean, &z, &b, self.f, self.precision).map_err(geometry(t))?;
            ctx.record(Record::State {
                round: t,
                value: v.clone(),
            });
            self.v = v;
            if t == self.total_rounds {
                ctx.record(Record::Decide { value: self.v.clone() });
                self.decided = Some(self.v.clone());
                self.ledgers.clear();
            } else {
                self.round = t + 1;
                ctx.broadcast(ApproxMsg::Rbc(self.rbc.send(self.me, t + 1, self.v.clone())));
            }
        }
        Ok(())
    }
}

impl Protocol for ApproxProcess {
    type Msg = ApproxMsg;

    fn start(&mut self, ctx: &mut Context<ApproxMsg>) -> Result<(), ProtocolError> {
        ctx.record(Record::State {
            round: 0,
            value: self.v.clone(),
        });
        ctx.broadcast(ApproxMsg::Rbc(self.rbc.send(self.me, 1, self.v.clone())));
        Ok(())
    }

    fn on_message(
        &mut self,
        from: ProcessId,
        msg: ApproxMsg,
        ctx: &mut Context<ApproxMsg>,
    ) -> Result<(), ProtocolError> {
        match msg {
            ApproxMsg::Rbc(m) => {
                let (origin, round) = (m.origin, m.round);
                let mut out = Vec::new();
                let delivered = self.rbc.handle(from, m, &mut out);
                for reply in out {
                    ctx.broadcast(ApproxMsg::Rbc(reply));
                }
                if let Some(value) = delivered {
                    ctx.record(Record::RbcDeliver {
                        origin,
                        round,
                        value: value.clone(),
                    });
                    self.on_tuple(origin, round, value, ctx);
                }
            }
            ApproxMsg::Report { round, origin, value } => {
                if self.open(round) {
                    self.ledger(round).add_report(from, origin, value);
                }
            }
        }
        self.try_advance(ctx)
    }

    fn decision(&self) -> Option<&RationalPoint> {
        self.decided.as_ref()
    }
}

/// Contraction factor and round count for a configuration.
pub fn approx_schedule(cfg: &ScenarioConfig) -> (crate::geom::Rational, u64) {
    let gamma = if cfg.n > 1 {
        compute_gamma(cfg.n, cfg.f, cfg.step2)
    } else {
        crate::geom::rational::int(1)
    };
    let rounds = termination_rounds(cfg, &gamma);
    (gamma, rounds)
}

pub fn run_approx(cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<Trace, SimError> {
    if cfg.mode != Mode::ApproxAsync {
        return Err(SimError::Config(ConfigError::InvalidParameter(format!(
            "run_approx needs mode approx_async, got {}",
            cfg.mode.name()
        ))));
    }
    validate_config(cfg)?;
    validate_inputs(cfg, inputs)?;
    let (_, rounds) = approx_schedule(cfg);
    run_simulation(cfg, |me| ApproxProcess::new(cfg, me, inputs[me].clone(), rounds))
}
