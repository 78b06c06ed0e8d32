//! Deterministic simulation of `n` processes on a complete graph of reliable
//! FIFO channels.
//!
//! Synchronous modes run in lockstep phases: every message tagged for phase
//! `r` is delivered before any process ends phase `r`. Asynchronous modes
//! deliver one channel head at a time, chosen by a seeded generator after
//! the adversary has filtered the candidates.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{GeomError, RationalPoint};
use crate::model::{ConfigError, ProcessId, ScenarioConfig, Strategy};
use crate::wire::{WireError, Writer};

/// A protocol message. Points inside it are exposed so that Byzantine
/// strategies can rewrite them.
pub trait Message: Clone + fmt::Debug {
    fn round(&self) -> u64;
    fn layer(&self) -> u8;
    fn encode(&self) -> Vec<u8>;
    fn decode(layer: u8, bytes: &[u8]) -> Result<Self, WireError>;
    fn map_points(&mut self, f: &mut dyn FnMut(&mut RationalPoint));
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("geometry failure in round {round}: {source}")]
    Geometry { round: u64, source: GeomError },
    #[error("invariant broken: {0}")]
    Invariant(String),
}

/// Facts a process reports about itself. The checkers audit these against
/// each other; they never trust a verdict computed by a process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    /// `v_i[round]`; round 0 is the input.
    State {
        round: u64,
        value: RationalPoint,
    },
    /// The tuple set used in the round's Step 2, in sender order.
    BSet {
        round: u64,
        tuples: Vec<(ProcessId, RationalPoint)>,
    },
    /// Witnesses of the round with the first `n − f` tuples each reported.
    Witnesses {
        round: u64,
        reports: Vec<(ProcessId, Vec<(ProcessId, RationalPoint)>)>,
    },
    /// The multiset averaged in the round.
    Z {
        round: u64,
        points: Vec<RationalPoint>,
    },
    /// A reliable-broadcast delivery.
    RbcDeliver {
        origin: ProcessId,
        round: u64,
        value: RationalPoint,
    },
    /// One agreement instance resolved (`coord` is set in element-wise mode).
    EigResolve {
        sender: ProcessId,
        coord: Option<usize>,
        value: RationalPoint,
    },
    /// The multiset every process should agree on before deciding.
    Agreed {
        multiset: Vec<RationalPoint>,
    },
    Decide {
        value: RationalPoint,
    },
}

pub struct Context<M> {
    pub id: ProcessId,
    pub n: usize,
    outbox: Vec<(ProcessId, M)>,
    records: Vec<Record>,
}

impl<M: Clone> Context<M> {
    fn new(id: ProcessId, n: usize) -> Self {
        Self {
            id,
            n,
            outbox: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn send(&mut self, to: ProcessId, msg: M) {
        self.outbox.push((to, msg));
    }

    /// Sends to every process, the sender included.
    pub fn broadcast(&mut self, msg: M) {
        for to in 0..self.n {
            self.outbox.push((to, msg.clone()));
        }
    }

    pub fn record(&mut self, record: Record) {
        self.records.push(record);
    }
}

pub trait Protocol {
    type Msg: Message;

    fn start(&mut self, ctx: &mut Context<Self::Msg>) -> Result<(), ProtocolError>;

    fn on_message(
        &mut self,
        from: ProcessId,
        msg: Self::Msg,
        ctx: &mut Context<Self::Msg>,
    ) -> Result<(), ProtocolError>;

    /// Called once per process at the end of each synchronous phase.
    fn on_round_end(&mut self, _phase: u64, _ctx: &mut Context<Self::Msg>) -> Result<(), ProtocolError> {
        Ok(())
    }

    fn decision(&self) -> Option<&RationalPoint>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub seq: u64,
    pub source: ProcessId,
    pub target: ProcessId,
    /// Position of this message in its channel's send order.
    pub channel_seq: u64,
    pub round: u64,
    pub layer: u8,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JournalEntry {
    /// Number of deliveries made before the record was written.
    pub at: u64,
    pub process: ProcessId,
    pub record: Record,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub deliveries: Vec<Delivery>,
    pub journal: Vec<JournalEntry>,
    /// Messages sent per channel, including ones never delivered.
    pub sent: BTreeMap<(ProcessId, ProcessId), u64>,
    /// Lockstep phases executed; zero for asynchronous runs.
    pub phases: u64,
    pub decisions: BTreeMap<ProcessId, RationalPoint>,
}

impl Trace {
    pub fn records_of(&self, process: ProcessId) -> impl Iterator<Item = &Record> {
        self.journal
            .iter()
            .filter(move |e| e.process == process)
            .map(|e| &e.record)
    }

    /// SHA-256 over a canonical encoding of deliveries, journal and decisions.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        for d in &self.deliveries {
            let mut w = Writer::new();
            w.u8(0)
                .u64(d.seq)
                .u64(d.source as u64)
                .u64(d.target as u64)
                .u64(d.channel_seq)
                .u64(d.round)
                .u8(d.layer);
            w.bytes(&d.payload);
            hasher.update(w.finish());
        }
        for e in &self.journal {
            let mut w = Writer::new();
            w.u8(1).u64(e.at).u64(e.process as u64);
            encode_record(&mut w, &e.record);
            hasher.update(w.finish());
        }
        for ((s, t), count) in &self.sent {
            let mut w = Writer::new();
            w.u8(2).u64(*s as u64).u64(*t as u64).u64(*count);
            hasher.update(w.finish());
        }
        let mut w = Writer::new();
        w.u8(3).u64(self.phases);
        for (p, v) in &self.decisions {
            w.u64(*p as u64).point(v);
        }
        hasher.update(w.finish());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn encode_tuples(w: &mut Writer, tuples: &[(ProcessId, RationalPoint)]) {
    w.u32(tuples.len() as u32);
    for (k, p) in tuples {
        w.u64(*k as u64).point(p);
    }
}

fn encode_record(w: &mut Writer, record: &Record) {
    match record {
        Record::State { round, value } => {
            w.u8(0).u64(*round).point(value);
        }
        Record::BSet { round, tuples } => {
            w.u8(1).u64(*round);
            encode_tuples(w, tuples);
        }
        Record::Witnesses { round, reports } => {
            w.u8(2).u64(*round).u32(reports.len() as u32);
            for (k, tuples) in reports {
                w.u64(*k as u64);
                encode_tuples(w, tuples);
            }
        }
        Record::Z { round, points } => {
            w.u8(3).u64(*round).u32(points.len() as u32);
            for p in points {
                w.point(p);
            }
        }
        Record::RbcDeliver { origin, round, value } => {
            w.u8(4).u64(*origin as u64).u64(*round).point(value);
        }
        Record::EigResolve { sender, coord, value } => {
            w.u8(5)
                .u64(*sender as u64)
                .u64(coord.map_or(u64::MAX, |c| c as u64))
                .point(value);
        }
        Record::Agreed { multiset } => {
            w.u8(6).u32(multiset.len() as u32);
            for p in multiset {
                w.point(p);
            }
        }
        Record::Decide { value } => {
            w.u8(7).point(value);
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("event cap of {cap} deliveries exceeded")]
    EventCapExceeded { cap: usize, trace: Box<Trace> },
    #[error("no deliverable message while processes {undecided:?} are undecided")]
    Stalled {
        undecided: Vec<ProcessId>,
        trace: Box<Trace>,
    },
    #[error("adversary violation: {0}")]
    AdversaryViolation(String),
    #[error("process {process}: {source}")]
    Protocol {
        process: ProcessId,
        source: ProtocolError,
        trace: Box<Trace>,
    },
}

impl SimError {
    /// The trace up to the failure, when one exists.
    pub fn partial_trace(&self) -> Option<&Trace> {
        match self {
            SimError::EventCapExceeded { trace, .. }
            | SimError::Stalled { trace, .. }
            | SimError::Protocol { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Rewrites or drops the outgoing messages of a Byzantine process.
pub fn apply_strategy<M: Message>(strategy: &Strategy, to: ProcessId, mut msg: M) -> Option<M> {
    match strategy {
        Strategy::Mute => None,
        Strategy::Crash { round } if msg.round() >= *round => None,
        Strategy::Crash { .. } | Strategy::Starve => Some(msg),
        Strategy::FixedLie { point } => {
            msg.map_points(&mut |p| *p = point.clone());
            Some(msg)
        }
        Strategy::Equivocate { points } => {
            let lie = &points[to % points.len()];
            msg.map_points(&mut |p| *p = lie.clone());
            Some(msg)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pending<M> {
    pub source: ProcessId,
    pub target: ProcessId,
    pub channel_seq: u64,
    pub msg: M,
}

/// Per-channel FIFO queues of undelivered messages.
#[derive(Debug)]
pub struct DeliveryQueue<M> {
    channels: BTreeMap<(ProcessId, ProcessId), VecDeque<Pending<M>>>,
    sent: BTreeMap<(ProcessId, ProcessId), u64>,
}

impl<M> Default for DeliveryQueue<M> {
    fn default() -> Self {
        Self {
            channels: BTreeMap::new(),
            sent: BTreeMap::new(),
        }
    }
}

impl<M: Message> DeliveryQueue<M> {
    pub fn push(&mut self, source: ProcessId, target: ProcessId, msg: M) {
        let counter = self.sent.entry((source, target)).or_insert(0);
        let channel_seq = *counter;
        *counter += 1;
        self.channels.entry((source, target)).or_default().push_back(Pending {
            source,
            target,
            channel_seq,
            msg,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.channels.values().all(VecDeque::is_empty)
    }

    pub fn len(&self) -> usize {
        self.channels.values().map(VecDeque::len).sum()
    }

    /// Channel heads, in (source, target) order.
    pub fn heads(&self) -> Vec<(ProcessId, ProcessId)> {
        self.channels
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(&k, _)| k)
            .collect()
    }

    fn pop(&mut self, channel: (ProcessId, ProcessId)) -> Pending<M> {
        self.channels
            .get_mut(&channel)
            .and_then(VecDeque::pop_front)
            .expect("non-empty channel")
    }
}

/// What the scheduler needs to know about the run.
pub struct SchedulerView<'a> {
    pub synchronous: bool,
    /// Sources whose messages are held back while `others_undecided`.
    pub starved: &'a [ProcessId],
    pub others_undecided: bool,
}

/// Removes and returns the next message to deliver, or `None` if nothing is
/// pending. Synchronous: the lowest round tag, then source, then channel
/// order. Asynchronous: a seeded uniform pick among the FIFO heads that the
/// adversary lets through.
pub fn scheduler_next<M: Message>(
    queue: &mut DeliveryQueue<M>,
    view: &SchedulerView<'_>,
    rng: &mut ChaCha8Rng,
) -> Option<Pending<M>> {
    let heads = queue.heads();
    if heads.is_empty() {
        return None;
    }
    if view.synchronous {
        let channel = heads
            .iter()
            .copied()
            .min_by_key(|ch| {
                let head = queue.channels[ch].front().expect("non-empty");
                (head.msg.round(), ch.0, ch.1)
            })
            .expect("non-empty");
        return Some(queue.pop(channel));
    }
    let mut eligible = heads.clone();
    if view.others_undecided && !view.starved.is_empty() {
        let unstarved: Vec<_> = heads
            .iter()
            .copied()
            .filter(|(s, _)| !view.starved.contains(s))
            .collect();
        if !unstarved.is_empty() {
            eligible = unstarved;
        }
    }
    let pick = if eligible.len() == 1 {
        0
    } else {
        rng.gen_range(0..eligible.len())
    };
    Some(queue.pop(eligible[pick]))
}

struct Node<P> {
    protocol: P,
    strategy: Option<Strategy>,
    /// A Byzantine process whose honest core failed keeps quiet from then on.
    halted: bool,
}

pub struct Simulator<'c, P: Protocol> {
    cfg: &'c ScenarioConfig,
    nodes: Vec<Node<P>>,
    queue: DeliveryQueue<P::Msg>,
    trace: Trace,
    rng: ChaCha8Rng,
    non_faulty: Vec<ProcessId>,
    starved: Vec<ProcessId>,
    /// First failure of an honest process in an under-provisioned run.
    failed: Option<(ProcessId, ProtocolError)>,
}

/// Runs the protocol built by `factory` for every process under the
/// adversary described by `cfg.faulty`.
pub fn run_simulation<P, F>(cfg: &ScenarioConfig, factory: F) -> Result<Trace, SimError>
where
    P: Protocol,
    F: FnMut(ProcessId) -> P,
{
    Simulator::new(cfg, factory)?.run()
}

impl<'c, P: Protocol> Simulator<'c, P> {
    pub fn new<F: FnMut(ProcessId) -> P>(cfg: &'c ScenarioConfig, mut factory: F) -> Result<Self, SimError> {
        let byzantine = cfg.faulty.values().filter(|s| s.is_byzantine()).count();
        if byzantine > cfg.f {
            return Err(SimError::AdversaryViolation(format!(
                "{byzantine} Byzantine processes exceed f = {}",
                cfg.f
            )));
        }
        if cfg.mode.is_synchronous() && !cfg.starved().is_empty() {
            return Err(SimError::AdversaryViolation(
                "starve schedules need an asynchronous network".into(),
            ));
        }
        let nodes = (0..cfg.n)
            .map(|i| Node {
                protocol: factory(i),
                strategy: cfg.faulty.get(&i).cloned(),
                halted: false,
            })
            .collect();
        Ok(Self {
            cfg,
            nodes,
            queue: DeliveryQueue::default(),
            trace: Trace::default(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            non_faulty: cfg.non_faulty(),
            starved: cfg.starved(),
            failed: None,
        })
    }

    fn is_byzantine(&self, id: ProcessId) -> bool {
        self.nodes[id].strategy.as_ref().is_some_and(Strategy::is_byzantine)
    }

    fn flush(&mut self, id: ProcessId, ctx: Context<P::Msg>) -> Result<(), SimError> {
        let byzantine = self.is_byzantine(id);
        for (to, msg) in ctx.outbox {
            if to >= self.cfg.n {
                return Err(SimError::AdversaryViolation(format!(
                    "process {id} addressed missing process {to}"
                )));
            }
            let msg = match &self.nodes[id].strategy {
                Some(s) if byzantine => apply_strategy(s, to, msg),
                _ => Some(msg),
            };
            if let Some(msg) = msg {
                self.queue.push(id, to, msg);
            }
        }
        if !byzantine {
            let at = self.trace.deliveries.len() as u64;
            for record in ctx.records {
                self.trace.journal.push(JournalEntry {
                    at,
                    process: id,
                    record,
                });
            }
            if let Some(v) = self.nodes[id].protocol.decision() {
                self.trace.decisions.entry(id).or_insert_with(|| v.clone());
            }
        }
        Ok(())
    }

    fn step<G>(&mut self, id: ProcessId, action: G) -> Result<(), SimError>
    where
        G: FnOnce(&mut P, &mut Context<P::Msg>) -> Result<(), ProtocolError>,
    {
        if self.nodes[id].halted {
            return Ok(());
        }
        let mut ctx = Context::new(id, self.cfg.n);
        if let Err(source) = action(&mut self.nodes[id].protocol, &mut ctx) {
            if self.is_byzantine(id) {
                self.nodes[id].halted = true;
                return Ok(());
            }
            self.flush(id, ctx)?;
            // Unsafe runs keep going so the trace shows what the others did.
            if self.cfg.allow_unsafe {
                self.nodes[id].halted = true;
                self.failed.get_or_insert((id, source));
                return Ok(());
            }
            return Err(SimError::Protocol {
                process: id,
                source,
                trace: Box::new(self.snapshot()),
            });
        }
        self.flush(id, ctx)
    }

    fn snapshot(&self) -> Trace {
        let mut trace = self.trace.clone();
        trace.sent = self.queue.sent.clone();
        trace
    }

    fn undecided(&self, skip_starved: bool) -> Vec<ProcessId> {
        self.non_faulty
            .iter()
            .copied()
            .filter(|i| !(skip_starved && self.starved.contains(i)))
            .filter(|&i| !self.nodes[i].halted && self.nodes[i].protocol.decision().is_none())
            .collect()
    }

    fn deliver(&mut self, pending: Pending<P::Msg>) -> Result<(), SimError> {
        if self.trace.deliveries.len() >= self.cfg.event_cap {
            return Err(SimError::EventCapExceeded {
                cap: self.cfg.event_cap,
                trace: Box::new(self.snapshot()),
            });
        }
        self.trace.deliveries.push(Delivery {
            seq: self.trace.deliveries.len() as u64,
            source: pending.source,
            target: pending.target,
            channel_seq: pending.channel_seq,
            round: pending.msg.round(),
            layer: pending.msg.layer(),
            payload: pending.msg.encode(),
        });
        let Pending {
            source, target, msg, ..
        } = pending;
        self.step(target, |p, ctx| p.on_message(source, msg, ctx))
    }

    pub fn run(mut self) -> Result<Trace, SimError> {
        for id in 0..self.cfg.n {
            self.step(id, |p, ctx| p.start(ctx))?;
        }
        if self.cfg.mode.is_synchronous() {
            self.run_lockstep()?;
        } else {
            self.run_async()?;
        }
        self.trace.sent = self.queue.sent.clone();
        match self.failed {
            Some((process, source)) => Err(SimError::Protocol {
                process,
                source,
                trace: Box::new(self.trace),
            }),
            None => Ok(self.trace),
        }
    }

    fn run_lockstep(&mut self) -> Result<(), SimError> {
        let view = SchedulerView {
            synchronous: true,
            starved: &[],
            others_undecided: false,
        };
        let mut phase = 0;
        while !self.undecided(false).is_empty() {
            phase += 1;
            loop {
                let due = self
                    .queue
                    .heads()
                    .iter()
                    .any(|ch| self.queue.channels[ch].front().is_some_and(|m| m.msg.round() <= phase));
                if !due {
                    break;
                }
                let next = scheduler_next(&mut self.queue, &view, &mut self.rng).expect("due message");
                self.deliver(next)?;
            }
            for id in 0..self.cfg.n {
                self.step(id, |p, ctx| p.on_round_end(phase, ctx))?;
            }
            self.trace.phases = phase;
            if self.trace.deliveries.len() >= self.cfg.event_cap || phase as usize > self.cfg.event_cap {
                return Err(SimError::EventCapExceeded {
                    cap: self.cfg.event_cap,
                    trace: Box::new(self.snapshot()),
                });
            }
        }
        Ok(())
    }

    fn run_async(&mut self) -> Result<(), SimError> {
        let starved = self.starved.clone();
        loop {
            let others_undecided = !self.undecided(true).is_empty();
            let view = SchedulerView {
                synchronous: false,
                starved: &starved,
                others_undecided,
            };
            match scheduler_next(&mut self.queue, &view, &mut self.rng) {
                Some(next) => self.deliver(next)?,
                None => {
                    let undecided = self.undecided(false);
                    if undecided.is_empty() {
                        return Ok(());
                    }
                    return Err(SimError::Stalled {
                        undecided,
                        trace: Box::new(self.snapshot()),
                    });
                }
            }
        }
    }
}

/// Every channel's deliveries follow its send order without gaps.
pub fn check_fifo(trace: &Trace) -> Result<(), String> {
    let mut next: BTreeMap<(ProcessId, ProcessId), u64> = BTreeMap::new();
    for d in &trace.deliveries {
        let expected = next.entry((d.source, d.target)).or_insert(0);
        if d.channel_seq != *expected {
            return Err(format!(
                "channel {}->{}: delivered message {} when {} was next",
                d.source, d.target, d.channel_seq, expected
            ));
        }
        *expected += 1;
    }
    Ok(())
}

/// Messages sent but never delivered on channels between the given processes.
pub fn undelivered(trace: &Trace, among: &[ProcessId]) -> u64 {
    let mut delivered: BTreeMap<(ProcessId, ProcessId), u64> = BTreeMap::new();
    for d in &trace.deliveries {
        *delivered.entry((d.source, d.target)).or_insert(0) += 1;
    }
    trace
        .sent
        .iter()
        .filter(|((s, t), _)| among.contains(s) && among.contains(t))
        .map(|(ch, count)| count - delivered.get(ch).copied().unwrap_or(0))
        .sum()
}
