//! The two case studies: a single drone touring a walled room, and two
//! delivery robots sharing a fenced yard with chargers.

pub mod config;
pub mod metrics;
pub mod run;
mod task_planner;

pub use config::{ConfigError, Destinations, ScenarioConfig, ScenarioKind};
pub use metrics::{switch_lines, Metrics, RobotMetrics};
pub use run::{
    build_runtime, planner_knowledge, run_scenario, run_scenario_with, RunError, RunOutput,
};
pub use task_planner::{Source, TaskPlanner};
