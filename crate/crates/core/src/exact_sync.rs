//! Exact BVC in a synchronous system: agree on the multiset of all inputs
//! with one Byzantine broadcast per sender, then decide the same point of
//! `Γ(S)` everywhere.

use crate::broadcast::{EigMsg, EigState, InstanceId};
use crate::geom::{gamma_select, GeomError, PointMultiset, RationalPoint};
use crate::model::{validate_config, validate_inputs, Mode, ProcessId, ScenarioConfig};
use crate::simnet::{run_simulation, Context, Protocol, ProtocolError, Record, SimError, Trace};

/// Decision rule once `S` is agreed.
pub fn exact_decide(s: &PointMultiset, f: usize) -> Result<RationalPoint, GeomError> {
    gamma_select(s, f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Broadcasting,
    Deciding,
    Done,
}

pub struct ExactProcess {
    me: ProcessId,
    n: usize,
    f: usize,
    d: usize,
    element_wise: bool,
    input: RationalPoint,
    eig: EigState,
    pub phase: Phase,
    pub agreed: Option<PointMultiset>,
    decided: Option<RationalPoint>,
}

impl ExactProcess {
    pub fn new(cfg: &ScenarioConfig, me: ProcessId, input: RationalPoint) -> Self {
        Self {
            me,
            n: cfg.n,
            f: cfg.f,
            d: cfg.d,
            element_wise: cfg.element_wise,
            input,
            eig: EigState::new(cfg.n, cfg.f, me, cfg.default_value()),
            phase: Phase::Broadcasting,
            agreed: None,
            decided: None,
        }
    }

    fn instances_of(&self, sender: ProcessId) -> Vec<InstanceId> {
        if self.element_wise {
            (0..self.d).map(|c| InstanceId { sender, coord: Some(c) }).collect()
        } else {
            vec![InstanceId { sender, coord: None }]
        }
    }

    fn resolve_all(&self, ctx: &mut Context<EigMsg>) -> PointMultiset {
        let mut s = PointMultiset::default();
        for sender in 0..self.n {
            let mut coords = Vec::with_capacity(self.d);
            for instance in self.instances_of(sender) {
                let value = self.eig.resolve(instance);
                ctx.record(Record::EigResolve {
                    sender,
                    coord: instance.coord,
                    value: value.clone(),
                });
                coords.extend(value.into_coords());
            }
            s.push(RationalPoint::new(coords));
        }
        s
    }
}

impl Protocol for ExactProcess {
    type Msg = EigMsg;

    fn start(&mut self, ctx: &mut Context<EigMsg>) -> Result<(), ProtocolError> {
        ctx.record(Record::State {
            round: 0,
            value: self.input.clone(),
        });
        let items = self
            .instances_of(self.me)
            .into_iter()
            .map(|inst| {
                let value = match inst.coord {
                    Some(c) => RationalPoint::new(vec![self.input.coord(c).clone()]),
                    None => self.input.clone(),
                };
                self.eig.initial_item(inst, value)
            })
            .collect();
        ctx.broadcast(EigMsg { round: 1, items });
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: EigMsg, _: &mut Context<EigMsg>) -> Result<(), ProtocolError> {
        self.eig.receive(from, msg.round, msg.items);
        Ok(())
    }

    fn on_round_end(&mut self, phase: u64, ctx: &mut Context<EigMsg>) -> Result<(), ProtocolError> {
        let last_eig_round = self.f as u64 + 1;
        if phase < last_eig_round {
            ctx.broadcast(EigMsg {
                round: phase + 1,
                items: self.eig.relay_items(phase),
            });
        } else if phase == last_eig_round {
            let s = self.resolve_all(ctx);
            ctx.record(Record::Agreed {
                multiset: s.members().to_vec(),
            });
            self.agreed = Some(s);
            self.phase = Phase::Deciding;
        } else if self.phase == Phase::Deciding {
            let s = self.agreed.as_ref().expect("agreed before deciding");
            let value = exact_decide(s, self.f).map_err(|source| ProtocolError::Geometry { round: phase, source })?;
            ctx.record(Record::Decide { value: value.clone() });
            self.decided = Some(value);
            self.phase = Phase::Done;
        }
        Ok(())
    }

    fn decision(&self) -> Option<&RationalPoint> {
        self.decided.as_ref()
    }
}

pub fn run_exact(cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<Trace, SimError> {
    if cfg.mode != Mode::ExactSync {
        return Err(SimError::Config(crate::model::ConfigError::InvalidParameter(format!(
            "run_exact needs mode exact_sync, got {}",
            cfg.mode.name()
        ))));
    }
    validate_config(cfg)?;
    validate_inputs(cfg, inputs)?;
    run_simulation(cfg, |me| ExactProcess::new(cfg, me, inputs[me].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;

    fn line(values: &[i64]) -> Vec<RationalPoint> {
        values.iter().map(|&v| RationalPoint::from_ints(&[v])).collect()
    }

    #[test]
    fn interval_example_decides_three() {
        let s = PointMultiset::new(line(&[0, 6, 12, 3]));
        assert_eq!(exact_decide(&s, 1).unwrap(), RationalPoint::from_ints(&[3]));
    }

    #[test]
    fn fault_free_run_takes_f_plus_two_phases() {
        let cfg = ScenarioConfig::new(Mode::ExactSync, 4, 1, 1);
        let trace = run_exact(&cfg, &line(&[0, 6, 12, 3])).unwrap();
        assert_eq!(trace.phases, 3);
        assert_eq!(trace.decisions.len(), 4);
        assert!(trace.decisions.values().all(|v| *v == RationalPoint::from_ints(&[3])));
    }

    #[test]
    fn element_wise_mode_agrees_with_point_mode() {
        let mut cfg = ScenarioConfig::new(Mode::ExactSync, 4, 1, 2);
        cfg.faulty.insert(
            3,
            Strategy::Equivocate {
                points: vec![RationalPoint::from_ints(&[9, 9]), RationalPoint::from_ints(&[-9, 0])],
            },
        );
        let inputs: Vec<_> = [[0, 0], [4, 1], [1, 5], [2, 2]]
            .iter()
            .map(|c| RationalPoint::from_ints(c))
            .collect();
        let a = run_exact(&cfg, &inputs).unwrap();
        cfg.element_wise = true;
        let b = run_exact(&cfg, &inputs).unwrap();
        let da: Vec<_> = a.decisions.values().collect();
        let db: Vec<_> = b.decisions.values().collect();
        assert!(da.windows(2).all(|w| w[0] == w[1]));
        assert!(db.windows(2).all(|w| w[0] == w[1]));
    }
}
