use super::config::ScenarioKind;
use crate::geometry::Cell;
use crate::runtime::{Context, Event, Machine, MachineError, MachineId, Payload};
use crate::stack::{Msg, RobotStack};
use crate::world::{RobotId, Workspace};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

/// Where a robot's destinations come from.
#[derive(Clone, Debug)]
pub enum Source {
    Fixed(VecDeque<Cell>),
    Random { remaining: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Init,
    Running,
    Done,
}

struct Slot {
    stack: RobotStack,
    source: Source,
    pose: Cell,
    active: Option<Cell>,
    finished: bool,
}

/// Application-level task planner. It spawns every robot stack on start,
/// then hands out destinations: surveillance sends each robot its whole
/// list at once, delivery streams one destination at a time.
pub struct TaskPlanner {
    kind: ScenarioKind,
    phase: Phase,
    workspace: Arc<Workspace>,
    rng: ChaCha8Rng,
    slots: BTreeMap<RobotId, Slot>,
    to_spawn: Vec<(MachineId, Box<dyn Machine<Msg>>)>,
}

impl TaskPlanner {
    pub fn new(kind: ScenarioKind, workspace: Arc<Workspace>, rng: ChaCha8Rng) -> Self {
        Self {
            kind,
            phase: Phase::Init,
            workspace,
            rng,
            slots: BTreeMap::new(),
            to_spawn: Vec::new(),
        }
    }

    /// Register a robot whose stack machines are spawned on start.
    pub fn add_robot(
        &mut self,
        robot: RobotId,
        start: Cell,
        stack: RobotStack,
        source: Source,
        machines: Vec<(MachineId, Box<dyn Machine<Msg>>)>,
    ) {
        self.slots.insert(
            robot,
            Slot {
                stack,
                source,
                pose: start,
                active: None,
                finished: false,
            },
        );
        self.to_spawn.extend(machines);
    }

    fn random_cell(&mut self, robot: RobotId) -> Option<Cell> {
        let ws = &self.workspace;
        let candidates: Vec<Cell> = match self.kind {
            ScenarioKind::Surveillance => ws.cells().collect(),
            ScenarioKind::Delivery => {
                let mut taken: BTreeSet<Cell> = ws.chargers.values().copied().collect();
                for (id, slot) in &self.slots {
                    taken.insert(slot.pose);
                    if *id != robot {
                        taken.extend(slot.active);
                    }
                }
                ws.cells()
                    .filter(|c| ws.is_free(*c) && !taken.contains(c))
                    .collect()
            }
        };
        if candidates.is_empty() {
            return None;
        }
        Some(candidates[self.rng.gen_range(0..candidates.len())])
    }

    fn next_destination(&mut self, robot: RobotId) -> Option<Cell> {
        let slot = self.slots.get_mut(&robot)?;
        match &mut slot.source {
            Source::Fixed(queue) => queue.pop_front(),
            Source::Random { remaining: 0 } => None,
            Source::Random { remaining } => {
                *remaining -= 1;
                self.random_cell(robot)
            }
        }
    }

    fn dispatch_all(&mut self, robot: RobotId, ctx: &mut Context<'_, Msg>) {
        let mut destinations = Vec::new();
        while let Some(d) = self.next_destination(robot) {
            destinations.push(d);
        }
        let slot = self.slots.get_mut(&robot).expect("known robot");
        if destinations.is_empty() {
            slot.finished = true;
        } else {
            ctx.send(
                slot.stack.robot_machine,
                Msg::DestinationsEvent { destinations },
            );
        }
    }

    fn dispatch_next(&mut self, robot: RobotId, ctx: &mut Context<'_, Msg>) {
        loop {
            let exhausted = match &self.slots[&robot].source {
                Source::Fixed(q) => q.is_empty(),
                Source::Random { remaining } => *remaining == 0,
            };
            if exhausted {
                let slot = self.slots.get_mut(&robot).expect("known robot");
                slot.active = None;
                slot.finished = true;
                return;
            }
            if let Some(d) = self.next_destination(robot) {
                let slot = self.slots.get_mut(&robot).expect("known robot");
                slot.active = Some(d);
                ctx.send(
                    slot.stack.robot_machine,
                    Msg::DestinationsEvent {
                        destinations: vec![d],
                    },
                );
                return;
            }
        }
    }

    fn check_done(&mut self) {
        if self.slots.values().all(|s| s.finished) {
            self.phase = Phase::Done;
        }
    }
}

impl Machine<Msg> for TaskPlanner {
    fn name(&self) -> String {
        "TaskPlanner".into()
    }

    fn state(&self) -> String {
        match (self.phase, self.kind) {
            (Phase::Init, _) => "Init".into(),
            (Phase::Running, ScenarioKind::Surveillance) => "StartSurveillance".into(),
            (Phase::Running, ScenarioKind::Delivery) => "Dispatching".into(),
            (Phase::Done, _) => "Done".into(),
        }
    }

    fn on_start(&mut self, ctx: &mut Context<'_, Msg>) -> Result<(), MachineError> {
        for (id, machine) in self.to_spawn.drain(..) {
            ctx.spawn_at(id, machine);
        }
        let me = ctx.id();
        ctx.send(me, Msg::Begin);
        Ok(())
    }

    fn handle(
        &mut self,
        event: &Event<Msg>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        match &event.payload {
            Msg::Begin if self.phase == Phase::Init => {
                self.phase = Phase::Running;
                let robots: Vec<RobotId> = self.slots.keys().copied().collect();
                for robot in robots {
                    match self.kind {
                        ScenarioKind::Surveillance => self.dispatch_all(robot, ctx),
                        ScenarioKind::Delivery => self.dispatch_next(robot, ctx),
                    }
                }
                self.check_done();
            }
            Msg::TaskReport { robot, at, .. } => {
                let slot = self.slots.get_mut(robot).ok_or_else(|| {
                    MachineError::Rejected(format!("report from unknown robot {robot}"))
                })?;
                if let Some(at) = at {
                    slot.pose = *at;
                }
                slot.active = None;
                if self.kind == ScenarioKind::Delivery {
                    self.dispatch_next(*robot, ctx);
                    self.check_done();
                }
            }
            Msg::AllTasksDone { robot } => {
                if self.kind == ScenarioKind::Surveillance {
                    if let Some(slot) = self.slots.get_mut(robot) {
                        slot.finished = true;
                    }
                    self.check_done();
                }
            }
            Msg::Violation(_) => {}
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
