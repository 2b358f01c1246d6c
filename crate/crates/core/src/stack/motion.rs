use super::messages::{Msg, Outcome};
use crate::geometry::Cell;
use crate::planner::{plan_path, Knowledge};
use crate::runtime::{Context, Event, Machine, MachineError, MachineId, Payload};
use crate::world::RobotId;
use std::collections::VecDeque;

/// Plans one goal at a time; the next plan is computed only after the
/// executor reports the current one finished.
pub struct MotionPlanner {
    robot: RobotId,
    knowledge: Knowledge,
    robot_machine: MachineId,
    executor: MachineId,
    pos: Cell,
    pending: VecDeque<Cell>,
    outstanding: Option<(u64, Cell)>,
    serial: u64,
}

impl MotionPlanner {
    pub fn new(
        robot: RobotId,
        knowledge: Knowledge,
        start: Cell,
        robot_machine: MachineId,
        executor: MachineId,
    ) -> Self {
        Self {
            robot,
            knowledge,
            robot_machine,
            executor,
            pos: start,
            pending: VecDeque::new(),
            outstanding: None,
            serial: 0,
        }
    }

    fn plan_next(&mut self, ctx: &mut Context<'_, Msg>) {
        while let Some(destination) = self.pending.pop_front() {
            match plan_path(&self.knowledge, self.pos, destination) {
                Ok(plan) => {
                    self.serial += 1;
                    self.outstanding = Some((self.serial, destination));
                    ctx.send(
                        self.executor,
                        Msg::PlanReady {
                            serial: self.serial,
                            plan,
                        },
                    );
                    return;
                }
                Err(e) => ctx.send(
                    self.robot_machine,
                    Msg::TaskSkipped {
                        destination,
                        reason: e.to_string(),
                    },
                ),
            }
        }
        ctx.send(self.robot_machine, Msg::PlannerIdle);
    }

    fn finish(
        &mut self,
        serial: u64,
        at: Cell,
        outcome: Outcome,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        match self.outstanding {
            Some((s, destination)) if s == serial => {
                self.outstanding = None;
                self.pos = at;
                ctx.send(
                    self.robot_machine,
                    Msg::TaskDone {
                        destination,
                        outcome,
                        at,
                    },
                );
                self.plan_next(ctx);
                Ok(())
            }
            _ => Err(MachineError::Rejected(format!(
                "plan {serial} is not outstanding"
            ))),
        }
    }
}

impl Machine<Msg> for MotionPlanner {
    fn name(&self) -> String {
        format!("MotionPlanner{}", self.robot)
    }

    fn state(&self) -> String {
        match self.outstanding {
            None => "Idle".into(),
            Some((s, _)) => format!("AwaitExecution({s})"),
        }
    }

    fn handle(
        &mut self,
        event: &Event<Msg>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        match &event.payload {
            Msg::Goal { destination } => {
                self.pending.push_back(*destination);
                if self.outstanding.is_none() {
                    self.plan_next(ctx);
                }
                Ok(())
            }
            Msg::PlanDone { serial, at } => self.finish(*serial, *at, Outcome::Completed, ctx),
            Msg::PlanAborted { serial, at, .. } => self.finish(*serial, *at, Outcome::Aborted, ctx),
            other => Err(MachineError::Rejected(format!(
                "unexpected {}",
                other.kind()
            ))),
        }
    }
}
