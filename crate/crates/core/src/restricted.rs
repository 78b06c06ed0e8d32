//! Approximate BVC with a single state exchange per round.
//!
//! Synchronous rounds collect one state from every process (defaults for the
//! silent ones) and average `Γ` over all `(n − f)`-subsets. Asynchronous
//! rounds proceed on the first `n − f` states, own included, and average `Γ`
//! over all `(n − 3f)`-subsets so that two processes always share at least
//! one subset made only of identical non-faulty tuples.

use std::collections::BTreeMap;

use crate::approx_async::{build_z, round_update, settle};
use crate::geom::{GammaMemo, GeomError, PointMultiset, Rational, RationalPoint};
use crate::model::{
    subset_gamma, termination_rounds, validate_config, validate_inputs, ConfigError, Mode, ProcessId, ScenarioConfig,
    StatePrecision, TupleSet,
};
use crate::simnet::{run_simulation, Context, Message, Protocol, ProtocolError, Record, SimError, Trace};
use crate::wire::{Reader, WireError, Writer};

pub const LAYER_STATE: u8 = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateMsg {
    pub round: u64,
    pub value: RationalPoint,
}

impl Message for StateMsg {
    fn round(&self) -> u64 {
        self.round
    }

    fn layer(&self) -> u8 {
        LAYER_STATE
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.round).point(&self.value);
        w.finish()
    }

    fn decode(layer: u8, bytes: &[u8]) -> Result<Self, WireError> {
        if layer != LAYER_STATE {
            return Err(WireError::Invalid { what: "layer", at: 0 });
        }
        let mut r = Reader::new(bytes);
        let round = r.u64()?;
        let value = r.point()?;
        r.finish()?;
        Ok(StateMsg { round, value })
    }

    fn map_points(&mut self, f: &mut dyn FnMut(&mut RationalPoint)) {
        f(&mut self.value)
    }
}

/// Size of the tuple set each round and of the subsets `Z` is built from.
pub fn restricted_subsets(mode: Mode, n: usize, f: usize) -> (usize, usize) {
    match mode {
        Mode::RestrictedAsync => (n - f, n.saturating_sub(3 * f)),
        _ => (n, n - f),
    }
}

/// `1/(n·C(|B|, subset size))`.
pub fn restricted_gamma(mode: Mode, n: usize, f: usize) -> Rational {
    let (slots, subset) = restricted_subsets(mode, n, f);
    subset_gamma(n, slots, subset)
}

/// Contraction factor and round count for a restricted configuration.
pub fn restricted_schedule(cfg: &ScenarioConfig) -> (Rational, u64) {
    let gamma = restricted_gamma(cfg.mode, cfg.n, cfg.f);
    let rounds = termination_rounds(cfg, &gamma);
    (gamma, rounds)
}

/// Per-round receive buffer and the state it was built from.
#[derive(Clone, Debug)]
pub struct RestrictedRoundState {
    pub round: u64,
    pub v: RationalPoint,
    /// States received per round, first per sender, in arrival order.
    pub received: BTreeMap<u64, Vec<(ProcessId, RationalPoint)>>,
}

impl RestrictedRoundState {
    fn add(&mut self, round: u64, sender: ProcessId, value: RationalPoint) {
        let slot = self.received.entry(round).or_default();
        if slot.iter().all(|(k, _)| *k != sender) {
            slot.push((sender, value));
        }
    }
}

struct Shared {
    me: ProcessId,
    n: usize,
    f: usize,
    subset: usize,
    precision: StatePrecision,
    memo: GammaMemo,
    total_rounds: u64,
    state: RestrictedRoundState,
    decided: Option<RationalPoint>,
}

impl Shared {
    fn new(cfg: &ScenarioConfig, me: ProcessId, input: RationalPoint, total_rounds: u64) -> Self {
        let (_, subset) = restricted_subsets(cfg.mode, cfg.n, cfg.f);
        Self {
            me,
            n: cfg.n,
            f: cfg.f,
            subset,
            precision: cfg.precision,
            memo: GammaMemo::default(),
            total_rounds,
            state: RestrictedRoundState {
                round: 1,
                v: input,
                received: BTreeMap::new(),
            },
            decided: None,
        }
    }

    /// Runs Step 2 on `bset` and either decides or moves to the next round.
    /// Returns true when a new round was entered.
    fn finish_round(&mut self, bset: TupleSet, ctx: &mut Context<StateMsg>) -> Result<bool, ProtocolError> {
        let t = self.state.round;
        ctx.record(Record::BSet {
            round: t,
            tuples: bset.iter().map(|(k, v)| (k, v.clone())).collect(),
        });
        let geometry = |source: GeomError| ProtocolError::Geometry { round: t, source };
        let z = build_z(&bset, self.subset, self.f, None, &mut self.memo).map_err(geometry)?;
        ctx.record(Record::Z {
            round: t,
            points: z.members().to_vec(),
        });
        let mean = round_update(&z).map_err(|e| ProtocolError::Invariant(e.to_string()))?;
        let b: PointMultiset = bset.iter().map(|(_, v)| v.clone()).collect();
        let v = settle(mean, &z, &b, self.f, self.precision).map_err(geometry)?;
        ctx.record(Record::State {
            round: t,
            value: v.clone(),
        });
        self.state.v = v;
        self.state.received.remove(&t);
        if t == self.total_rounds {
            ctx.record(Record::Decide {
                value: self.state.v.clone(),
            });
            self.decided = Some(self.state.v.clone());
            self.state.received.clear();
            return Ok(false);
        }
        self.state.round = t + 1;
        Ok(true)
    }
}

/// One state message to everyone per lockstep phase.
pub struct RestrictedSyncProcess {
    inner: Shared,
    default: RationalPoint,
}

impl RestrictedSyncProcess {
    pub fn new(cfg: &ScenarioConfig, me: ProcessId, input: RationalPoint, total_rounds: u64) -> Self {
        Self {
            inner: Shared::new(cfg, me, input, total_rounds),
            default: cfg.default_value(),
        }
    }
}

impl Protocol for RestrictedSyncProcess {
    type Msg = StateMsg;

    fn start(&mut self, ctx: &mut Context<StateMsg>) -> Result<(), ProtocolError> {
        ctx.record(Record::State {
            round: 0,
            value: self.inner.state.v.clone(),
        });
        ctx.broadcast(StateMsg {
            round: 1,
            value: self.inner.state.v.clone(),
        });
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: StateMsg, _: &mut Context<StateMsg>) -> Result<(), ProtocolError> {
        if self.inner.decided.is_none() && msg.round == self.inner.state.round && msg.value.dim() == self.default.dim()
        {
            self.inner.state.add(msg.round, from, msg.value);
        }
        Ok(())
    }

    fn on_round_end(&mut self, phase: u64, ctx: &mut Context<StateMsg>) -> Result<(), ProtocolError> {
        if self.inner.decided.is_some() || phase != self.inner.state.round {
            return Ok(());
        }
        let heard: BTreeMap<_, _> = self
            .inner
            .state
            .received
            .remove(&phase)
            .unwrap_or_default()
            .into_iter()
            .collect();
        let mut bset = TupleSet::new(phase);
        for k in 0..self.inner.n {
            bset.insert(k, heard.get(&k).cloned().unwrap_or_else(|| self.default.clone()));
        }
        if self.inner.finish_round(bset, ctx)? {
            ctx.broadcast(StateMsg {
                round: phase + 1,
                value: self.inner.state.v.clone(),
            });
        }
        Ok(())
    }

    fn decision(&self) -> Option<&RationalPoint> {
        self.inner.decided.as_ref()
    }
}

/// Waits for `n − f` states per round, its own included.
pub struct RestrictedAsyncProcess {
    inner: Shared,
    dim: usize,
}

impl RestrictedAsyncProcess {
    pub fn new(cfg: &ScenarioConfig, me: ProcessId, input: RationalPoint, total_rounds: u64) -> Self {
        Self {
            inner: Shared::new(cfg, me, input, total_rounds),
            dim: cfg.d,
        }
    }

    fn enter_round(&mut self, ctx: &mut Context<StateMsg>) {
        let s = &mut self.inner;
        let (me, round, v) = (s.me, s.state.round, s.state.v.clone());
        s.state.add(round, me, v.clone());
        for to in (0..s.n).filter(|&k| k != me) {
            ctx.send(
                to,
                StateMsg {
                    round,
                    value: v.clone(),
                },
            );
        }
    }

    fn try_advance(&mut self, ctx: &mut Context<StateMsg>) -> Result<(), ProtocolError> {
        loop {
            let s = &mut self.inner;
            let quorum = s.n - s.f;
            let t = s.state.round;
            let ready = s.state.received.get(&t).is_some_and(|r| r.len() >= quorum);
            if s.decided.is_some() || !ready {
                return Ok(());
            }
            let mut bset = TupleSet::new(t);
            for (k, v) in s.state.received[&t].iter().take(quorum) {
                bset.insert(*k, v.clone());
            }
            if !s.finish_round(bset, ctx)? {
                return Ok(());
            }
            self.enter_round(ctx);
        }
    }
}

impl Protocol for RestrictedAsyncProcess {
    type Msg = StateMsg;

    fn start(&mut self, ctx: &mut Context<StateMsg>) -> Result<(), ProtocolError> {
        ctx.record(Record::State {
            round: 0,
            value: self.inner.state.v.clone(),
        });
        self.enter_round(ctx);
        self.try_advance(ctx)
    }

    fn on_message(&mut self, from: ProcessId, msg: StateMsg, ctx: &mut Context<StateMsg>) -> Result<(), ProtocolError> {
        let s = &mut self.inner;
        let open = s.decided.is_none() && msg.round >= s.state.round && msg.round <= s.total_rounds;
        if open && msg.value.dim() == self.dim {
            s.state.add(msg.round, from, msg.value);
        }
        self.try_advance(ctx)
    }

    fn decision(&self) -> Option<&RationalPoint> {
        self.inner.decided.as_ref()
    }
}

pub fn run_restricted(cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<Trace, SimError> {
    validate_config(cfg)?;
    validate_inputs(cfg, inputs)?;
    let (_, rounds) = restricted_schedule(cfg);
    match cfg.mode {
        Mode::RestrictedSync => run_simulation(cfg, |me| {
            RestrictedSyncProcess::new(cfg, me, inputs[me].clone(), rounds)
        }),
        Mode::RestrictedAsync => run_simulation(cfg, |me| {
            RestrictedAsyncProcess::new(cfg, me, inputs[me].clone(), rounds)
        }),
        other => Err(SimError::Config(ConfigError::InvalidParameter(format!(
            "run_restricted needs a restricted mode, got {}",
            other.name()
        )))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rational::{int, rational};
    use crate::model::{spread, Strategy};

    fn line(values: &[i64]) -> Vec<RationalPoint> {
        values.iter().map(|&v| RationalPoint::from_ints(&[v])).collect()
    }

    fn bsets(trace: &Trace, round: u64) -> Vec<Vec<(ProcessId, RationalPoint)>> {
        trace
            .journal
            .iter()
            .filter_map(|e| match &e.record {
                Record::BSet { round: r, tuples } if *r == round => Some(tuples.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn gamma_values() {
        assert_eq!(restricted_gamma(Mode::RestrictedSync, 4, 1), rational(1, 16));
        assert_eq!(restricted_gamma(Mode::RestrictedAsync, 6, 1), rational(1, 60));
        assert_eq!(restricted_gamma(Mode::RestrictedAsync, 7, 1), rational(1, 105));
    }

    #[test]
    fn sync_liar_sending_three_gives_nine_halves() {
        let mut cfg = ScenarioConfig::new(Mode::RestrictedSync, 4, 1, 1);
        cfg.upper = int(12);
        cfg.faulty.insert(
            3,
            Strategy::FixedLie {
                point: RationalPoint::from_ints(&[3]),
            },
        );
        let trace = run_restricted(&cfg, &line(&[0, 6, 12, 0])).unwrap();
        let first: Vec<_> = trace
            .journal
            .iter()
            .filter_map(|e| match &e.record {
                Record::State { round: 1, value } => Some(value.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(first, vec![RationalPoint::new(vec![rational(9, 2)]); 3]);
        let b = bsets(&trace, 1);
        assert!(b.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sync_silent_peer_gets_the_default() {
        let mut cfg = ScenarioConfig::new(Mode::RestrictedSync, 4, 1, 1);
        cfg.upper = int(12);
        cfg.faulty.insert(0, Strategy::Mute);
        let trace = run_restricted(&cfg, &line(&[5, 6, 12, 3])).unwrap();
        assert!(bsets(&trace, 1)
            .iter()
            .all(|b| b[0].1 == RationalPoint::from_ints(&[0])));
        assert_eq!(trace.decisions.len(), 3);
    }

    #[test]
    fn async_run_reaches_epsilon_agreement() {
        let mut cfg = ScenarioConfig::new(Mode::RestrictedAsync, 6, 1, 1);
        cfg.epsilon = rational(1, 10);
        cfg.seed = 3;
        cfg.faulty.insert(5, Strategy::Equivocate { points: line(&[0, 1]) });
        let inputs: Vec<_> = [0, 1, 1, 0, 1, 0]
            .iter()
            .map(|&v| RationalPoint::from_ints(&[v]))
            .collect();
        let trace = run_restricted(&cfg, &inputs).unwrap();
        assert_eq!(trace.decisions.len(), 5);
        assert!(spread(trace.decisions.values()).unwrap().rho[0] < cfg.epsilon);
        for b in bsets(&trace, 1) {
            assert_eq!(b.len(), 5);
        }
    }
}
