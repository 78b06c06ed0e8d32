//! Broadcast primitives.
//!
//! * [`EigState`]: synchronous Byzantine broadcast by exponential
//!   information gathering, `f + 1` rounds, recursive majority.
//! * [`Rbc`]: Bracha's asynchronous reliable broadcast.
//! * [`WitnessLedger`]: per-round tuple set plus the report-based witness
//!   rule that gives overlapping views between non-faulty processes.

use std::collections::{BTreeMap, BTreeSet};

use crate::geom::RationalPoint;
use crate::model::{ProcessId, ScenarioConfig, TupleSet};
use crate::simnet::{run_simulation, Context, Message, Protocol, ProtocolError, Record, SimError};
use crate::wire::{Reader, WireError, Writer};

/// Identifies one agreement instance: a sender's whole point, or one of its
/// coordinates in element-wise mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId {
    pub sender: ProcessId,
    pub coord: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EigItem {
    pub instance: InstanceId,
    /// Distinct ids; the first is the instance sender, the last the relayer.
    pub label: Vec<ProcessId>,
    pub value: RationalPoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EigMsg {
    pub round: u64,
    pub items: Vec<EigItem>,
}

pub const LAYER_EIG: u8 = 0;

impl Message for EigMsg {
    fn round(&self) -> u64 {
        self.round
    }

    fn layer(&self) -> u8 {
        LAYER_EIG
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.round).u32(self.items.len() as u32);
        for item in &self.items {
            w.u64(item.instance.sender as u64);
            w.u64(item.instance.coord.map_or(u64::MAX, |c| c as u64));
            w.u32(item.label.len() as u32);
            for &id in &item.label {
                w.u64(id as u64);
            }
            w.point(&item.value);
        }
        w.finish()
    }

    fn decode(_: u8, bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let round = r.u64()?;
        let count = r.u32()? as usize;
        let mut items = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let sender = r.u64()? as usize;
            let coord = match r.u64()? {
                u64::MAX => None,
                c => Some(c as usize),
            };
            let len = r.u32()? as usize;
            let label = (0..len)
                .map(|_| r.u64().map(|v| v as usize))
                .collect::<Result<_, _>>()?;
            let value = r.point()?;
            items.push(EigItem {
                instance: InstanceId { sender, coord },
                label,
                value,
            });
        }
        r.finish()?;
        Ok(EigMsg { round, items })
    }

    fn map_points(&mut self, f: &mut dyn FnMut(&mut RationalPoint)) {
        for item in &mut self.items {
            f(&mut item.value);
        }
    }
}

/// One process's view of any number of concurrent EIG instances.
#[derive(Clone, Debug)]
pub struct EigState {
    n: usize,
    f: usize,
    me: ProcessId,
    default: RationalPoint,
    trees: BTreeMap<InstanceId, BTreeMap<Vec<ProcessId>, RationalPoint>>,
}

impl EigState {
    pub fn new(n: usize, f: usize, me: ProcessId, default: RationalPoint) -> Self {
        Self {
            n,
            f,
            me,
            default,
            trees: BTreeMap::new(),
        }
    }

    fn default_for(&self, instance: InstanceId) -> RationalPoint {
        match instance.coord {
            Some(c) => RationalPoint::new(vec![self.default.coord(c).clone()]),
            None => self.default.clone(),
        }
    }

    /// Round-1 item carrying the sender's own value.
    pub fn initial_item(&self, instance: InstanceId, value: RationalPoint) -> EigItem {
        EigItem {
            instance,
            label: vec![self.me],
            value,
        }
    }

    /// Stores the items of a round-`round` message from `from`. Items with a
    /// malformed label or value are ignored, which later reads as the default.
    pub fn receive(&mut self, from: ProcessId, round: u64, items: Vec<EigItem>) {
        for item in items {
            let label = &item.label;
            let distinct = label.iter().collect::<BTreeSet<_>>().len() == label.len();
            let well_formed = label.len() as u64 == round
                && label.len() <= self.f + 1
                && label.first() == Some(&item.instance.sender)
                && label.last() == Some(&from)
                && distinct
                && label.iter().all(|&id| id < self.n)
                && item.value.dim() == self.default_for(item.instance).dim();
            if !well_formed {
                continue;
            }
            self.trees
                .entry(item.instance)
                .or_default()
                .entry(item.label)
                .or_insert(item.value);
        }
    }

    /// Items to send in round `round + 1`: every stored label of length
    /// `round` that does not contain this process, extended by it.
    pub fn relay_items(&self, round: u64) -> Vec<EigItem> {
        let mut items = Vec::new();
        for (&instance, tree) in &self.trees {
            for (label, value) in tree {
                if label.len() as u64 == round && !label.contains(&self.me) {
                    let mut extended = label.clone();
                    extended.push(self.me);
                    items.push(EigItem {
                        instance,
                        label: extended,
                        value: value.clone(),
                    });
                }
            }
        }
        items
    }

    /// Recursive strict-majority resolution of an instance; missing values
    /// and ties resolve to the default point.
    pub fn resolve(&self, instance: InstanceId) -> RationalPoint {
        let empty = BTreeMap::new();
        let tree = self.trees.get(&instance).unwrap_or(&empty);
        self.resolve_label(tree, &mut vec![instance.sender], &self.default_for(instance))
    }

    fn resolve_label(
        &self,
        tree: &BTreeMap<Vec<ProcessId>, RationalPoint>,
        label: &mut Vec<ProcessId>,
        default: &RationalPoint,
    ) -> RationalPoint {
        if label.len() == self.f + 1 {
            return tree.get(label.as_slice()).cloned().unwrap_or_else(|| default.clone());
        }
        let mut children = Vec::new();
        for j in 0..self.n {
            if label.contains(&j) {
                continue;
            }
            label.push(j);
            children.push(self.resolve_label(tree, label, default));
            label.pop();
        }
        strict_majority(&children).unwrap_or_else(|| default.clone())
    }
}

fn strict_majority(values: &[RationalPoint]) -> Option<RationalPoint> {
    let mut counts: BTreeMap<&RationalPoint, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .find(|(_, c)| 2 * c > values.len())
        .map(|(v, _)| v.clone())
}

/// Single-sender Byzantine broadcast as a standalone protocol.
pub struct EigBroadcast {
    state: EigState,
    instance: InstanceId,
    value: Option<RationalPoint>,
    f: usize,
    decided: Option<RationalPoint>,
}

impl EigBroadcast {
    pub fn new(cfg: &ScenarioConfig, me: ProcessId, sender: ProcessId, value: RationalPoint) -> Self {
        Self {
            state: EigState::new(cfg.n, cfg.f, me, cfg.default_value()),
            instance: InstanceId { sender, coord: None },
            value: (me == sender).then_some(value),
            f: cfg.f,
            decided: None,
        }
    }
}

impl Protocol for EigBroadcast {
    type Msg = EigMsg;

    fn start(&mut self, ctx: &mut Context<EigMsg>) -> Result<(), ProtocolError> {
        if let Some(v) = self.value.clone() {
            let item = self.state.initial_item(self.instance, v);
            ctx.broadcast(EigMsg {
                round: 1,
                items: vec![item],
            });
        }
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: EigMsg, _: &mut Context<EigMsg>) -> Result<(), ProtocolError> {
        self.state.receive(from, msg.round, msg.items);
        Ok(())
    }

    fn on_round_end(&mut self, phase: u64, ctx: &mut Context<EigMsg>) -> Result<(), ProtocolError> {
        if phase <= self.f as u64 {
            let items = self.state.relay_items(phase);
            ctx.broadcast(EigMsg {
                round: phase + 1,
                items,
            });
        } else if self.decided.is_none() {
            let value = self.state.resolve(self.instance);
            ctx.record(Record::EigResolve {
                sender: self.instance.sender,
                coord: None,
                value: value.clone(),
            });
            ctx.record(Record::Decide { value: value.clone() });
            self.decided = Some(value);
        }
        Ok(())
    }

    fn decision(&self) -> Option<&RationalPoint> {
        self.decided.as_ref()
    }
}

/// Runs one broadcast from `sender` and returns the non-faulty decisions.
pub fn eig_broadcast(
    cfg: &ScenarioConfig,
    sender: ProcessId,
    value: RationalPoint,
) -> Result<BTreeMap<ProcessId, RationalPoint>, SimError> {
    if cfg.n < 3 * cfg.f + 1 {
        return Err(SimError::Config(crate::model::ConfigError::InvalidParameter(format!(
            "Byzantine broadcast needs n >= 3f+1, got n = {}, f = {}",
            cfg.n, cfg.f
        ))));
    }
    let trace = run_simulation(cfg, |me| EigBroadcast::new(cfg, me, sender, value.clone()))?;
    Ok(trace.decisions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RbcKind {
    Send,
    Echo,
    Ready,
}

impl RbcKind {
    pub fn layer(self) -> u8 {
        match self {
            RbcKind::Send => 1,
            RbcKind::Echo => 2,
            RbcKind::Ready => 3,
        }
    }

    pub fn from_layer(layer: u8) -> Option<Self> {
        match layer {
            1 => Some(RbcKind::Send),
            2 => Some(RbcKind::Echo),
            3 => Some(RbcKind::Ready),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RbcMsg {
    pub kind: RbcKind,
    pub origin: ProcessId,
    pub round: u64,
    pub value: RationalPoint,
}

#[derive(Clone, Debug, Default)]
struct RbcInstance {
    echoed: bool,
    readied: bool,
    delivered: bool,
    echo_from: BTreeSet<ProcessId>,
    ready_from: BTreeSet<ProcessId>,
    echoes: BTreeMap<RationalPoint, usize>,
    readies: BTreeMap<RationalPoint, usize>,
}

/// Bracha reliable broadcast, one instance per (origin, round).
#[derive(Clone, Debug)]
pub struct Rbc {
    n: usize,
    f: usize,
    instances: BTreeMap<(ProcessId, u64), RbcInstance>,
}

impl Rbc {
    pub fn new(n: usize, f: usize) -> Self {
        Self {
            n,
            f,
            instances: BTreeMap::new(),
        }
    }

    pub fn echo_quorum(&self) -> usize {
        (self.n + self.f + 2) / 2
    }

    pub fn send(&self, me: ProcessId, round: u64, value: RationalPoint) -> RbcMsg {
        RbcMsg {
            kind: RbcKind::Send,
            origin: me,
            round,
            value,
        }
    }

    /// Processes one message. Messages to broadcast are appended to `out`;
    /// returns the payload if this message completes delivery.
    pub fn handle(&mut self, from: ProcessId, msg: RbcMsg, out: &mut Vec<RbcMsg>) -> Option<RationalPoint> {
        let (n, f) = (self.n, self.f);
        let echo_quorum = self.echo_quorum();
        let inst = self.instances.entry((msg.origin, msg.round)).or_default();
        let reply = |kind, value: &RationalPoint| RbcMsg {
            kind,
            origin: msg.origin,
            round: msg.round,
            value: value.clone(),
        };
        match msg.kind {
            RbcKind::Send => {
                if from == msg.origin && !inst.echoed {
                    inst.echoed = true;
                    out.push(reply(RbcKind::Echo, &msg.value));
                }
            }
            RbcKind::Echo => {
                if inst.echo_from.insert(from) {
                    let count = inst.echoes.entry(msg.value.clone()).or_insert(0);
                    *count += 1;
                    if *count >= echo_quorum && !inst.readied {
                        inst.readied = true;
                        out.push(reply(RbcKind::Ready, &msg.value));
                    }
                }
            }
            RbcKind::Ready => {
                if inst.ready_from.insert(from) {
                    let count = inst.readies.entry(msg.value.clone()).or_insert(0);
                    *count += 1;
                    let count = *count;
                    if count > f && !inst.readied {
                        inst.readied = true;
                        out.push(reply(RbcKind::Ready, &msg.value));
                    }
                    if count > 2 * f && !inst.delivered {
                        inst.delivered = true;
                        debug_assert!(count <= n);
                        return Some(msg.value);
                    }
                }
            }
        }
        None
    }
}

/// Per-round tuple set of one process, the reports it has received, and the
/// witness rule.
#[derive(Clone, Debug)]
pub struct WitnessLedger {
    n: usize,
    f: usize,
    pub bset: TupleSet,
    /// Tuples reported by each peer, in arrival order, first per sender only.
    reports: BTreeMap<ProcessId, Vec<(ProcessId, RationalPoint)>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collected {
    pub bset: TupleSet,
    /// Witnesses in id order, each with its first `n − f` reported tuples.
    pub witnesses: Vec<(ProcessId, Vec<(ProcessId, RationalPoint)>)>,
}

impl WitnessLedger {
    pub fn new(n: usize, f: usize, round: u64) -> Self {
        Self {
            n,
            f,
            bset: TupleSet::new(round),
            reports: BTreeMap::new(),
        }
    }

    pub fn round(&self) -> u64 {
        self.bset.round
    }

    /// Adds a delivered tuple; true if it is new and should be reported.
    pub fn add_tuple(&mut self, sender: ProcessId, value: RationalPoint) -> bool {
        self.bset.insert(sender, value)
    }

    pub fn add_report(&mut self, from: ProcessId, sender: ProcessId, value: RationalPoint) {
        let list = self.reports.entry(from).or_default();
        if list.len() < self.n - self.f && list.iter().all(|(k, _)| *k != sender) {
            list.push((sender, value));
        }
    }

    /// Peers whose first `n − f` reported tuples are all in the local set.
    pub fn witnesses(&self) -> Vec<ProcessId> {
        self.reports
            .iter()
            .filter(|(_, list)| list.len() == self.n - self.f && list.iter().all(|(k, v)| self.bset.contains(*k, v)))
            .map(|(&p, _)| p)
            .collect()
    }

    /// The round's output once `|B| >= n − f` and there are at least `n − f`
    /// witnesses.
    pub fn collect_bset(&self) -> Option<Collected> {
        if self.bset.len() < self.n - self.f {
            return None;
        }
        let witnesses = self.witnesses();
        if witnesses.len() < self.n - self.f {
            return None;
        }
        Some(Collected {
            bset: self.bset.clone(),
            witnesses: witnesses.into_iter().map(|w| (w, self.reports[&w].clone())).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rational::int;

    fn pt(v: i64) -> RationalPoint {
        RationalPoint::from_ints(&[v])
    }

    #[test]
    fn echo_quorum_is_ceiling() {
        assert_eq!(Rbc::new(4, 1).echo_quorum(), 3);
        assert_eq!(Rbc::new(5, 1).echo_quorum(), 4);
        assert_eq!(Rbc::new(7, 2).echo_quorum(), 5);
    }

    #[test]
    fn rbc_delivers_after_quorums() {
        let mut rbc = Rbc::new(4, 1);
        let mut out = Vec::new();
        assert_eq!(
            rbc.handle(
                2,
                RbcMsg {
                    kind: RbcKind::Send,
                    origin: 2,
                    round: 1,
                    value: pt(5)
                },
                &mut out
            ),
            None
        );
        assert_eq!(out.len(), 1);
        // A second send or a send relayed by someone else is ignored.
        rbc.handle(
            2,
            RbcMsg {
                kind: RbcKind::Send,
                origin: 2,
                round: 1,
                value: pt(6),
            },
            &mut out,
        );
        rbc.handle(
            1,
            RbcMsg {
                kind: RbcKind::Send,
                origin: 2,
                round: 1,
                value: pt(6),
            },
            &mut out,
        );
        assert_eq!(out.len(), 1);
        for from in 0..3 {
            rbc.handle(
                from,
                RbcMsg {
                    kind: RbcKind::Echo,
                    origin: 2,
                    round: 1,
                    value: pt(5),
                },
                &mut out,
            );
        }
        assert_eq!(out.last().unwrap().kind, RbcKind::Ready);
        let mut delivered = None;
        for from in 0..3 {
            delivered = delivered.or(rbc.handle(
                from,
                RbcMsg {
                    kind: RbcKind::Ready,
                    origin: 2,
                    round: 1,
                    value: pt(5),
                },
                &mut out,
            ));
        }
        assert_eq!(delivered, Some(pt(5)));
    }

    #[test]
    fn witness_needs_first_reports_present() {
        let mut ledger = WitnessLedger::new(4, 1, 1);
        for k in 0..3 {
            ledger.add_tuple(k, pt(k as i64));
        }
        for peer in 0..3 {
            for k in 0..3 {
                ledger.add_report(peer, k, pt(k as i64));
            }
        }
        assert_eq!(ledger.witnesses(), vec![0, 1, 2]);
        assert!(ledger.collect_bset().is_some());
        // A peer whose first report names a tuple not held here is no witness.
        ledger.add_report(3, 3, pt(3));
        ledger.add_report(3, 0, pt(0));
        ledger.add_report(3, 1, pt(1));
        assert_eq!(ledger.witnesses(), vec![0, 1, 2]);
        ledger.add_tuple(3, pt(3));
        assert_eq!(ledger.witnesses(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn eig_majority_and_default() {
        let mut state = EigState::new(4, 1, 0, RationalPoint::splat(1, int(0)));
        let inst = InstanceId { sender: 1, coord: None };
        state.receive(
            1,
            1,
            vec![EigItem {
                instance: inst,
                label: vec![1],
                value: pt(9),
            }],
        );
        state.receive(
            0,
            2,
            vec![EigItem {
                instance: inst,
                label: vec![1, 0],
                value: pt(9),
            }],
        );
        state.receive(
            2,
            2,
            vec![EigItem {
                instance: inst,
                label: vec![1, 2],
                value: pt(9),
            }],
        );
        state.receive(
            3,
            2,
            vec![EigItem {
                instance: inst,
                label: vec![1, 3],
                value: pt(4),
            }],
        );
        assert_eq!(state.resolve(inst), pt(9));
        // Forged relayer id is dropped.
        let mut other = EigState::new(4, 1, 0, RationalPoint::splat(1, int(0)));
        other.receive(
            3,
            2,
            vec![EigItem {
                instance: inst,
                label: vec![1, 2],
                value: pt(4),
            }],
        );
        assert_eq!(other.relay_items(2).len(), 0);
        assert_eq!(other.resolve(inst), pt(0));
    }
}
