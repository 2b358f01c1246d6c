use crate::geometry::Cell;
use crate::planner::Plan;
use crate::rta::Decision;
use crate::runtime::{MachineId, Payload};
use crate::world::{Command, Intent, RobotId, Violation, WorldView};
use serde::{Deserialize, Serialize};

/// Machine ids making up one robot's stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotStack {
    pub robot_machine: MachineId,
    pub motion_planner: MachineId,
    pub plan_executor: MachineId,
    pub decision_module: MachineId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    Aborted,
    Skipped,
}

/// What a plan executor tells the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum SimOp {
    /// Robot machine hookup; binds the robot to its executor.
    Register { executor: MachineId },
    /// Start taking part in ticks.
    Join { serial: u64, cells: Vec<Cell> },
    /// This tick's command and the intent published with it.
    Act { command: Command, intent: Intent },
    /// Stop taking part in ticks (counts as a wait this tick).
    Leave,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Msg {
    /// Task planner to itself, after the stacks are spawned.
    Begin,
    DestinationsEvent {
        destinations: Vec<Cell>,
    },
    Goal {
        destination: Cell,
    },
    PlanReady {
        serial: u64,
        plan: Plan,
    },
    PlanDone {
        serial: u64,
        at: Cell,
    },
    PlanAborted {
        serial: u64,
        at: Cell,
        reason: String,
    },
    TaskSkipped {
        destination: Cell,
        reason: String,
    },
    /// Motion planner to robot machine: a goal was resolved.
    TaskDone {
        destination: Cell,
        outcome: Outcome,
        at: Cell,
    },
    /// Motion planner has nothing queued or outstanding.
    PlannerIdle,
    /// Robot machine to task planner.
    TaskReport {
        robot: RobotId,
        destination: Cell,
        outcome: Outcome,
        /// Where the robot ended up; unknown for skipped goals.
        at: Option<Cell>,
    },
    AllTasksDone {
        robot: RobotId,
    },
    CheckRequest {
        view: WorldView,
        plan: Vec<Cell>,
    },
    CheckReply {
        decision: Decision,
    },
    SimCommand {
        robot: RobotId,
        #[serde(flatten)]
        op: SimOp,
    },
    /// The simulator hands a robot its view for the tick being assembled.
    SimAck {
        view: WorldView,
    },
    Violation(Violation),
}

impl Payload for Msg {
    fn kind(&self) -> &'static str {
        match self {
            Msg::Begin => "Begin",
            Msg::DestinationsEvent { .. } => "DestinationsEvent",
            Msg::Goal { .. } => "Goal",
            Msg::PlanReady { .. } => "PlanReady",
            Msg::PlanDone { .. } => "PlanDone",
            Msg::PlanAborted { .. } => "PlanAborted",
            Msg::TaskSkipped { .. } => "TaskSkipped",
            Msg::TaskDone { .. } => "TaskDone",
            Msg::PlannerIdle => "PlannerIdle",
            Msg::TaskReport { .. } => "TaskReport",
            Msg::AllTasksDone { .. } => "AllTasksDone",
            Msg::CheckRequest { .. } => "CheckRequest",
            Msg::CheckReply { .. } => "CheckReply",
            Msg::SimCommand { .. } => "SimCommand",
            Msg::SimAck { .. } => "SimAck",
            Msg::Violation(_) => "Violation",
        }
    }
}
