//! Per-robot software stack: robot machine, motion planner, plan executor
//! and decision module, plus the simulator they actuate through.

mod decision;
mod executor;
pub mod messages;
mod motion;
pub mod protocol;
mod robot;
mod simulator;

pub use decision::DecisionModule;
pub use executor::PlanExecutor;
pub use messages::{Msg, Outcome, RobotStack, SimOp};
pub use motion::MotionPlanner;
pub use protocol::{check_protocol, ProtocolViolation};
pub use robot::RobotMachine;
pub use simulator::Simulator;
