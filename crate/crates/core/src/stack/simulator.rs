//! Simulator machine: owns the [`WorldState`] and advances it in ticks.
//!
//! A tick is assembled from the robots currently executing a plan. They
//! decide one at a time in id order: each receives a `SimAck` with a view
//! that already contains the intents committed earlier in the same tick,
//! and answers with a `SimCommand`. Once every participant has answered,
//! all commands are applied simultaneously and violations are reported to
//! the observer.

use super::messages::{Msg, SimOp};
use crate::runtime::{Context, Event, Machine, MachineError, MachineId};
use crate::world::{step_world, Command, Intent, RobotId, RobotStatus, WorldState};
use std::collections::{BTreeMap, BTreeSet};

pub struct Simulator {
    world: WorldState,
    observer: MachineId,
    executors: BTreeMap<RobotId, MachineId>,
    intents: BTreeMap<RobotId, Intent>,
    engaged: BTreeSet<RobotId>,
    joining: BTreeSet<RobotId>,
    round: Option<Round>,
}

struct Round {
    order: Vec<RobotId>,
    next: usize,
    commands: Vec<(RobotId, Command)>,
    leaving: Vec<RobotId>,
}

impl Simulator {
    pub fn new(world: WorldState, observer: MachineId) -> Self {
        Self {
            world,
            observer,
            executors: BTreeMap::new(),
            intents: BTreeMap::new(),
            engaged: BTreeSet::new(),
            joining: BTreeSet::new(),
            round: None,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    fn executor(&self, robot: RobotId) -> Result<MachineId, MachineError> {
        self.executors
            .get(&robot)
            .copied()
            .ok_or_else(|| MachineError::Rejected(format!("robot {robot} is not registered")))
    }

    fn start_round(&mut self, ctx: &mut Context<'_, Msg>) -> Result<(), MachineError> {
        self.engaged.append(&mut self.joining);
        if self.engaged.is_empty() {
            self.round = None;
            return Ok(());
        }
        for intent in self.intents.values_mut() {
            intent.committed = false;
        }
        self.round = Some(Round {
            order: self.engaged.iter().copied().collect(),
            next: 0,
            commands: Vec::new(),
            leaving: Vec::new(),
        });
        self.prompt(ctx)
    }

    fn prompt(&mut self, ctx: &mut Context<'_, Msg>) -> Result<(), MachineError> {
        let round = self.round.as_ref().expect("round in progress");
        let robot = round.order[round.next];
        let view = self.world.view(robot, &self.intents);
        ctx.send(self.executor(robot)?, Msg::SimAck { view });
        Ok(())
    }

    fn answer(
        &mut self,
        robot: RobotId,
        op: SimOp,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        let round = self.round.as_mut().ok_or_else(|| {
            MachineError::Rejected(format!("robot {robot} answered outside a tick"))
        })?;
        if round.order.get(round.next) != Some(&robot) {
            return Err(MachineError::Rejected(format!(
                "robot {robot} answered out of turn"
            )));
        }
        let intent = self.intents.entry(robot).or_default();
        match op {
            SimOp::Act {
                command,
                intent: published,
            } => {
                *intent = Intent {
                    committed: true,
                    ..published
                };
                round.commands.push((robot, command));
            }
            SimOp::Leave => {
                *intent = Intent {
                    status: RobotStatus::Idle,
                    cells: Vec::new(),
                    plan_serial: intent.plan_serial,
                    committed: true,
                };
                round.leaving.push(robot);
            }
            _ => unreachable!("only answers reach here"),
        }
        round.next += 1;
        if round.next < round.order.len() {
            return self.prompt(ctx);
        }

        let round = self.round.take().expect("round in progress");
        let (world, violations) = step_world(&self.world, &round.commands)
            .map_err(|e| MachineError::Fault(e.to_string()))?;
        self.world = world;
        ctx.set_tick(self.world.tick);
        for v in violations {
            ctx.send(self.observer, Msg::Violation(v));
        }
        for r in round.leaving {
            self.engaged.remove(&r);
        }
        self.start_round(ctx)
    }
}

impl Machine<Msg> for Simulator {
    fn name(&self) -> String {
        "Simulator".into()
    }

    fn state(&self) -> String {
        match &self.round {
            None => "Idle".into(),
            Some(r) => format!("Tick{}[{}/{}]", self.world.tick, r.next, r.order.len()),
        }
    }

    fn on_start(&mut self, ctx: &mut Context<'_, Msg>) -> Result<(), MachineError> {
        ctx.set_tick(self.world.tick);
        Ok(())
    }

    fn handle(
        &mut self,
        event: &Event<Msg>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        let Msg::SimCommand { robot, op } = &event.payload else {
            return Err(MachineError::Rejected(format!(
                "unexpected {:?}",
                event.payload
            )));
        };
        let robot = *robot;
        self.world
            .robot(robot)
            .map_err(|e| MachineError::Rejected(e.to_string()))?;
        match op {
            SimOp::Register { executor } => {
                self.executors.insert(robot, *executor);
                self.intents.entry(robot).or_default();
                Ok(())
            }
            SimOp::Join { serial, cells } => {
                self.executor(robot)?;
                // A robot that left earlier in this tick may rejoin with its next plan.
                let rejoined = match self.round.as_mut() {
                    Some(round) => match round.leaving.iter().position(|r| *r == robot) {
                        Some(i) => {
                            round.leaving.remove(i);
                            true
                        }
                        None => false,
                    },
                    None => false,
                };
                if !rejoined && (self.engaged.contains(&robot) || self.joining.contains(&robot)) {
                    return Err(MachineError::Rejected(format!(
                        "robot {robot} joined twice"
                    )));
                }
                self.intents.insert(
                    robot,
                    Intent {
                        status: RobotStatus::Active,
                        cells: cells.clone(),
                        plan_serial: *serial,
                        committed: false,
                    },
                );
                if !rejoined {
                    self.joining.insert(robot);
                }
                if self.round.is_none() {
                    self.start_round(ctx)?;
                }
                Ok(())
            }
            SimOp::Act { .. } | SimOp::Leave => self.answer(robot, op.clone(), ctx),
        }
    }
}
