use super::messages::{Msg, SimOp};
use crate::geometry::Cell;
use crate::planner::Plan;
use crate::rta::Decision;
use crate::runtime::{Context, Event, Machine, MachineError, MachineId, Payload};
use crate::world::{Command, Intent, RobotId, WorldView};

/// Drives one plan at a time: for every tick it asks the decision module
/// what to do and forwards the chosen command to the simulator.
pub struct PlanExecutor {
    robot: RobotId,
    simulator: MachineId,
    decision_module: MachineId,
    motion_planner: MachineId,
    job: Option<Job>,
}

struct Job {
    serial: u64,
    destination: Cell,
    remaining: Vec<Cell>,
    busy: bool,
    phase: Phase,
    pos: Cell,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitTick,
    AwaitDecision,
}

impl PlanExecutor {
    pub fn new(
        robot: RobotId,
        simulator: MachineId,
        decision_module: MachineId,
        motion_planner: MachineId,
    ) -> Self {
        Self {
            robot,
            simulator,
            decision_module,
            motion_planner,
            job: None,
        }
    }

    fn to_sim(&self, op: SimOp, ctx: &mut Context<'_, Msg>) {
        ctx.send(
            self.simulator,
            Msg::SimCommand {
                robot: self.robot,
                op,
            },
        );
    }

    fn start(
        &mut self,
        serial: u64,
        plan: &Plan,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        if let Some(job) = &self.job {
            return Err(MachineError::Rejected(format!(
                "plan {serial} arrived while plan {} is executing",
                job.serial
            )));
        }
        let remaining = plan.remaining().to_vec();
        self.to_sim(
            SimOp::Join {
                serial,
                cells: remaining.clone(),
            },
            ctx,
        );
        self.job = Some(Job {
            serial,
            destination: plan.destination,
            remaining,
            busy: false,
            phase: Phase::AwaitTick,
            pos: plan.destination,
        });
        Ok(())
    }

    fn on_tick(
        &mut self,
        view: &WorldView,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        let job = self
            .job
            .as_mut()
            .ok_or_else(|| MachineError::Rejected("no plan executing".into()))?;
        if job.phase != Phase::AwaitTick {
            return Err(MachineError::Rejected(
                "tick while awaiting a decision".into(),
            ));
        }
        job.pos = view.own().pos;
        if job.remaining.is_empty() && !job.busy {
            return self.finish(None, ctx);
        }
        job.phase = Phase::AwaitDecision;
        let plan = job.remaining.clone();
        ctx.send(
            self.decision_module,
            Msg::CheckRequest {
                view: view.clone(),
                plan,
            },
        );
        Ok(())
    }

    fn on_decision(
        &mut self,
        decision: &Decision,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        let job = self
            .job
            .as_mut()
            .ok_or_else(|| MachineError::Rejected("no plan executing".into()))?;
        if job.phase != Phase::AwaitDecision {
            return Err(MachineError::Rejected("decision without a request".into()));
        }
        if let Some(plan) = &decision.replace_plan {
            job.remaining = plan.clone();
        }
        let command = match &decision.command {
            None => return self.finish(None, ctx),
            Some(Command::PlanAbort) => {
                return self.finish(Some(format!("aborted by {}", decision.controller)), ctx);
            }
            Some(c) => c.clone(),
        };
        if decision.advance && !job.remaining.is_empty() {
            job.remaining.remove(0);
        }
        job.busy = decision.busy;
        job.phase = Phase::AwaitTick;
        let intent = Intent {
            status: decision.status,
            cells: decision.intent.clone(),
            plan_serial: job.serial,
            committed: true,
        };
        self.to_sim(SimOp::Act { command, intent }, ctx);
        Ok(())
    }

    /// Leave the tick protocol and report the plan's outcome.
    fn finish(
        &mut self,
        abort: Option<String>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        let job = self.job.take().expect("job present");
        self.to_sim(SimOp::Leave, ctx);
        let reason = match abort {
            Some(r) => Some(r),
            None if job.pos != job.destination => Some(format!(
                "stopped at {} short of {}",
                job.pos, job.destination
            )),
            None => None,
        };
        let msg = match reason {
            None => Msg::PlanDone {
                serial: job.serial,
                at: job.pos,
            },
            Some(reason) => Msg::PlanAborted {
                serial: job.serial,
                at: job.pos,
                reason,
            },
        };
        ctx.send(self.motion_planner, msg);
        Ok(())
    }
}

impl Machine<Msg> for PlanExecutor {
    fn name(&self) -> String {
        format!("PlanExecutor{}", self.robot)
    }

    fn state(&self) -> String {
        match &self.job {
            None => "Idle".into(),
            Some(j) if j.phase == Phase::AwaitTick => format!("AwaitTick({})", j.serial),
            Some(j) => format!("AwaitDecision({})", j.serial),
        }
    }

    fn handle(
        &mut self,
        event: &Event<Msg>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        match &event.payload {
            Msg::PlanReady { serial, plan } => self.start(*serial, plan, ctx),
            Msg::SimAck { view } => self.on_tick(view, ctx),
            Msg::CheckReply { decision } => self.on_decision(decision, ctx),
            other => Err(MachineError::Rejected(format!(
                "unexpected {}",
                other.kind()
            ))),
        }
    }
}
