use super::messages::{Msg, Outcome, SimOp};
use crate::geometry::Cell;
use crate::runtime::{Context, Event, Machine, MachineError, MachineId, Payload};
use crate::world::RobotId;

/// Interface between the task planner and the robot's motion planner.
pub struct RobotMachine {
    robot: RobotId,
    simulator: MachineId,
    task_planner: MachineId,
    motion_planner: MachineId,
    executor: MachineId,
    outstanding: usize,
}

impl RobotMachine {
    pub fn new(
        robot: RobotId,
        simulator: MachineId,
        task_planner: MachineId,
        motion_planner: MachineId,
        executor: MachineId,
    ) -> Self {
        Self {
            robot,
            simulator,
            task_planner,
            motion_planner,
            executor,
            outstanding: 0,
        }
    }
}

impl Machine<Msg> for RobotMachine {
    fn name(&self) -> String {
        format!("Robot{}", self.robot)
    }

    fn state(&self) -> String {
        match self.outstanding {
            0 => "Idle".into(),
            n => format!("Busy({n})"),
        }
    }

    fn on_start(&mut self, ctx: &mut Context<'_, Msg>) -> Result<(), MachineError> {
        ctx.send(
            self.simulator,
            Msg::SimCommand {
                robot: self.robot,
                op: SimOp::Register {
                    executor: self.executor,
                },
            },
        );
        Ok(())
    }

    fn handle(
        &mut self,
        event: &Event<Msg>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        match &event.payload {
            Msg::DestinationsEvent { destinations } => {
                if destinations.is_empty() {
                    return Err(MachineError::Rejected("empty destination list".into()));
                }
                for &destination in destinations {
                    ctx.send(self.motion_planner, Msg::Goal { destination });
                }
                self.outstanding += destinations.len();
            }
            Msg::TaskDone {
                destination,
                outcome,
                at,
            } => self.report(*destination, *outcome, Some(*at), ctx),
            Msg::TaskSkipped { destination, .. } => {
                self.report(*destination, Outcome::Skipped, None, ctx)
            }
            Msg::PlannerIdle => {
                if self.outstanding == 0 {
                    ctx.send(self.task_planner, Msg::AllTasksDone { robot: self.robot });
                }
            }
            other => {
                return Err(MachineError::Rejected(format!(
                    "unexpected {}",
                    other.kind()
                )))
            }
        }
        Ok(())
    }
}

impl RobotMachine {
    fn report(
        &mut self,
        destination: Cell,
        outcome: Outcome,
        at: Option<Cell>,
        ctx: &mut Context<'_, Msg>,
    ) {
        self.outstanding = self.outstanding.saturating_sub(1);
        ctx.send(
            self.task_planner,
            Msg::TaskReport {
                robot: self.robot,
                destination,
                outcome,
                at,
            },
        );
    }
}
