use super::config::{ConfigError, Destinations, ScenarioConfig, ScenarioKind};
use super::metrics::Metrics;
use super::task_planner::{Source, TaskPlanner};
use crate::monitors;
use crate::planner::Knowledge;
use crate::rta::{AdvancedController, RtaModule, WaypointFollower};
use crate::runtime::{Machine, Runtime, RuntimeError, TraceRecord};
use crate::stack::{
    DecisionModule, MotionPlanner, Msg, PlanExecutor, RobotMachine, RobotStack, Simulator,
};
use crate::world::{RobotId, Workspace, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

/// Mixed into the run seed for destination generation, so destinations and
/// scheduling draw from independent streams.
pub const DESTINATION_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub truncated: bool,
    pub machine_count: usize,
}

/// What the motion planner of a scenario knows about the workspace. Neither
/// knows the fence; the surveillance planner does not even know the walls.
pub fn planner_knowledge(kind: ScenarioKind, ws: &Workspace) -> Knowledge {
    match kind {
        ScenarioKind::Surveillance => Knowledge::bounds_only(ws.width, ws.height),
        ScenarioKind::Delivery => Knowledge::static_obstacles(ws),
    }
}

pub type AdvancedFactory<'a> = &'a dyn Fn(RobotId) -> Box<dyn AdvancedController>;

/// Wire every machine of a scenario into a fresh runtime.
pub fn build_runtime(
    config: &ScenarioConfig,
    advanced: AdvancedFactory<'_>,
) -> Result<Runtime<Msg>, RunError> {
    config.validate()?;
    let ws = Arc::new(config.build_workspace()?);
    let world = WorldState::new(ws.clone(), config.robot_phys()).map_err(ConfigError::from)?;

    let mut rt = Runtime::new(config.scheduler, config.seed);
    let task_planner_id = rt.reserve();
    let simulator_id = rt.reserve();
    let rng = ChaCha8Rng::seed_from_u64(config.seed ^ DESTINATION_SALT);
    let mut task_planner = TaskPlanner::new(config.kind, ws.clone(), rng);

    for spec in &config.robots {
        let stack = RobotStack {
            robot_machine: rt.reserve(),
            motion_planner: rt.reserve(),
            plan_executor: rt.reserve(),
            decision_module: rt.reserve(),
        };
        let monitors = config
            .monitors
            .iter()
            .map(|m| monitors::build(&m.id, m.delta, &ws))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ConfigError::from)?;
        let module = if config.rta_enabled {
            RtaModule::new(monitors, advanced(spec.id))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?
        } else {
            RtaModule::disabled(monitors, advanced(spec.id))
        };
        let machines: Vec<(_, Box<dyn Machine<Msg>>)> = vec![
            (
                stack.robot_machine,
                Box::new(RobotMachine::new(
                    spec.id,
                    simulator_id,
                    task_planner_id,
                    stack.motion_planner,
                    stack.plan_executor,
                )),
            ),
            (
                stack.motion_planner,
                Box::new(MotionPlanner::new(
                    spec.id,
                    planner_knowledge(config.kind, &ws),
                    spec.start,
                    stack.robot_machine,
                    stack.plan_executor,
                )),
            ),
            (
                stack.plan_executor,
                Box::new(PlanExecutor::new(
                    spec.id,
                    simulator_id,
                    stack.decision_module,
                    stack.motion_planner,
                )),
            ),
            (
                stack.decision_module,
                Box::new(DecisionModule::new(spec.id, module)),
            ),
        ];
        let source = match &config.destinations {
            Destinations::Fixed(lists) => {
                Source::Fixed(lists.get(&spec.id).cloned().unwrap_or_default().into())
            }
            Destinations::Random { count } => Source::Random { remaining: *count },
        };
        task_planner.add_robot(spec.id, spec.start, stack, source, machines);
    }

    rt.spawn_at(
        simulator_id,
        Box::new(Simulator::new(world, task_planner_id)),
    )?;
    rt.spawn_at(task_planner_id, Box::new(task_planner))?;
    Ok(rt)
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput, RunError> {
    run_scenario_with(config, &|_| Box::new(WaypointFollower))
}

/// Run with a custom advanced controller per robot.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    advanced: AdvancedFactory<'_>,
) -> Result<RunOutput, RunError> {
    let mut rt = build_runtime(config, advanced)?;
    let run = rt.run_until_quiescent(config.step_budget)?;
    let machine_count = rt.machine_count();
    let metrics = Metrics::from_trace(config, &run.records, run.steps, run.truncated);
    Ok(RunOutput {
        trace: run.records,
        metrics,
        truncated: run.truncated,
        machine_count,
    })
}
