//! Ground-truth grid world: workspace geometry, robot kinematics and battery.
//!
//! The simulator never protects robots from themselves. Unsafe outcomes are
//! applied and reported as [`Violation`]s; keeping their count at zero is the
//! job of the assurance layer.

use crate::geometry::Cell;
use crate::runtime::{Direction, TraceRecord};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

pub type RobotId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("robot {robot}: move from {from} to {to} is not to a 4-neighbour")]
    NotAdjacent {
        robot: RobotId,
        from: Cell,
        to: Cell,
    },
    #[error("invalid workspace: {0}")]
    InvalidWorkspace(String),
    #[error("invalid robot {0}: {1}")]
    InvalidRobot(RobotId, String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Cell>,
    pub obstacles: BTreeSet<Cell>,
    /// Cells a robot is allowed to occupy.
    pub geofence: BTreeSet<Cell>,
    pub chargers: BTreeMap<RobotId, Cell>,
    /// Chebyshev radius around walls and obstacles treated as dangerous.
    pub danger_margin: u32,
}

impl Workspace {
    /// An open `width x height` grid: no walls or obstacles, fence = whole grid.
    pub fn open(width: i32, height: i32) -> Self {
        let mut ws = Workspace {
            width,
            height,
            ..Default::default()
        };
        ws.geofence = ws.cells().collect();
        ws
    }

    /// Open grid whose outermost ring of cells is wall.
    pub fn walled(width: i32, height: i32, danger_margin: u32) -> Self {
        let mut ws = Self::open(width, height);
        ws.walls = ws.boundary().collect();
        ws.danger_margin = danger_margin;
        ws
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }

    pub fn boundary(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells()
            .filter(|c| c.x == 0 || c.y == 0 || c.x == self.width - 1 || c.y == self.height - 1)
    }

    pub fn in_grid(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.walls.contains(&c) || self.obstacles.contains(&c)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_grid(c) && !self.is_blocked(c)
    }

    pub fn in_fence(&self, c: Cell) -> bool {
        self.geofence.contains(&c)
    }

    pub fn center(&self) -> Cell {
        Cell::new(self.width / 2, self.height / 2)
    }

    /// Chebyshev distance to the nearest wall cell, `None` without walls.
    pub fn wall_distance(&self, c: Cell) -> Option<u32> {
        self.walls.iter().map(|w| w.chebyshev(c)).min()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |msg: String| Err(WorldError::InvalidWorkspace(msg));
        if self.width <= 0 || self.height <= 0 {
            return bad(format!("dimensions {}x{}", self.width, self.height));
        }
        for c in self
            .walls
            .iter()
            .chain(&self.obstacles)
            .chain(&self.geofence)
        {
            if !self.in_grid(*c) {
                return bad(format!("cell {c} outside the grid"));
            }
        }
        for (robot, c) in &self.chargers {
            if !self.is_free(*c) {
                return bad(format!(
                    "charger of robot {robot} at {c} is not a free cell"
                ));
            }
        }
        if 2 * self.danger_margin >= self.width.min(self.height) as u32 {
            return bad(format!("danger margin {} too large", self.danger_margin));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotPhys {
    pub id: RobotId,
    pub pos: Cell,
    pub battery: f64,
    pub battery_capacity: f64,
    pub drain_per_move: f64,
    /// Set once the battery ran out mid-move; the robot no longer moves.
    pub dead: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    WallStrike,
    RobotCollision,
    GeofenceExit,
    BatteryDead,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 4] = [
        ViolationKind::WallStrike,
        ViolationKind::RobotCollision,
        ViolationKind::GeofenceExit,
        ViolationKind::BatteryDead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::WallStrike => "wall-strike",
            ViolationKind::RobotCollision => "robot-collision",
            ViolationKind::GeofenceExit => "geofence-exit",
            ViolationKind::BatteryDead => "battery-dead",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tick: u64,
    pub robot: RobotId,
    pub kind: ViolationKind,
    pub cell: Cell,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<RobotId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", content = "to", rename_all = "kebab-case")]
pub enum Command {
    MoveTo(Cell),
    Wait,
    PlanAbort,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub workspace: Arc<Workspace>,
    pub robots: BTreeMap<RobotId, RobotPhys>,
    pub tick: u64,
}

impl WorldState {
    pub fn new(
        workspace: Arc<Workspace>,
        robots: impl IntoIterator<Item = RobotPhys>,
    ) -> Result<Self, WorldError> {
        workspace.validate()?;
        let robots: BTreeMap<_, _> = robots.into_iter().map(|r| (r.id, r)).collect();
        let mut taken = BTreeSet::new();
        for r in robots.values() {
            if !workspace.is_free(r.pos) {
                return Err(WorldError::InvalidRobot(
                    r.id,
                    format!("start {} is not free", r.pos),
                ));
            }
            if !taken.insert(r.pos) {
                return Err(WorldError::InvalidRobot(
                    r.id,
                    format!("start {} is shared", r.pos),
                ));
            }
            if r.battery < 0.0 || r.battery > r.battery_capacity {
                return Err(WorldError::InvalidRobot(
                    r.id,
                    "battery outside [0, capacity]".into(),
                ));
            }
        }
        Ok(Self {
            workspace,
            robots,
            tick: 0,
        })
    }

    pub fn robot(&self, id: RobotId) -> Result<&RobotPhys, WorldError> {
        self.robots.get(&id).ok_or(WorldError::UnknownRobot(id))
    }

    /// Immutable snapshot for robot `me`, annotated with what each robot has
    /// published about its intentions.
    pub fn view(&self, me: RobotId, intents: &BTreeMap<RobotId, Intent>) -> WorldView {
        WorldView {
            tick: self.tick,
            me,
            workspace: Arc::clone(&self.workspace),
            robots: self
                .robots
                .values()
                .map(|r| {
                    let intent = intents.get(&r.id).cloned().unwrap_or_default();
                    RobotSnapshot {
                        id: r.id,
                        pos: r.pos,
                        battery: r.battery,
                        capacity: r.battery_capacity,
                        drain: r.drain_per_move,
                        charger: self.workspace.chargers.get(&r.id).copied(),
                        status: intent.status,
                        intent: intent.cells,
                        plan_serial: intent.plan_serial,
                        committed: intent.committed,
                    }
                })
                .collect(),
        }
    }
}

/// Advance the world one tick with simultaneous commands (at most one per
/// robot). Moves are resolved together: two robots ending in one cell, or
/// exchanging cells, is a collision.
pub fn step_world(
    state: &WorldState,
    commands: &[(RobotId, Command)],
) -> Result<(WorldState, Vec<Violation>), WorldError> {
    let ws = &state.workspace;
    let mut next = state.clone();
    next.tick += 1;
    let tick = next.tick;
    let mut violations = Vec::new();
    let mut ordered: Vec<&(RobotId, Command)> = commands.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);

    for (id, cmd) in ordered {
        let robot = next
            .robots
            .get_mut(id)
            .ok_or(WorldError::UnknownRobot(*id))?;
        let Command::MoveTo(target) = cmd else {
            continue;
        };
        if !robot.pos.is_adjacent(*target) {
            return Err(WorldError::NotAdjacent {
                robot: *id,
                from: robot.pos,
                to: *target,
            });
        }
        if robot.dead {
            continue;
        }
        if robot.battery < robot.drain_per_move {
            robot.battery = 0.0;
            robot.dead = true;
            violations.push(Violation {
                tick,
                robot: *id,
                kind: ViolationKind::BatteryDead,
                cell: robot.pos,
                other: None,
            });
            continue;
        }
        robot.battery -= robot.drain_per_move;
        if !ws.is_free(*target) {
            violations.push(Violation {
                tick,
                robot: *id,
                kind: ViolationKind::WallStrike,
                cell: *target,
                other: None,
            });
            continue;
        }
        let was_inside = ws.in_fence(robot.pos);
        robot.pos = *target;
        if was_inside && !ws.in_fence(*target) {
            violations.push(Violation {
                tick,
                robot: *id,
                kind: ViolationKind::GeofenceExit,
                cell: *target,
                other: None,
            });
        }
    }

    let ids: Vec<RobotId> = next.robots.keys().copied().collect();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let (a0, b0) = (state.robots[a].pos, state.robots[b].pos);
            let (a1, b1) = (next.robots[a].pos, next.robots[b].pos);
            let meet = a1 == b1 && a0 != b0;
            let swap = a1 == b0 && b1 == a0 && a0 != a1;
            if meet || swap {
                violations.push(Violation {
                    tick,
                    robot: *a,
                    kind: ViolationKind::RobotCollision,
                    cell: a1,
                    other: Some(*b),
                });
            }
        }
    }

    for id in &ids {
        next = recharge_if_docked(&next, *id);
    }
    Ok((next, violations))
}

/// Single-robot physics step.
pub fn apply(
    state: &WorldState,
    robot: RobotId,
    cmd: Command,
) -> Result<(WorldState, Vec<Violation>), WorldError> {
    state.robot(robot)?;
    step_world(state, &[(robot, cmd)])
}

/// Refill the battery if the robot sits on its own charger.
pub fn recharge_if_docked(state: &WorldState, robot: RobotId) -> WorldState {
    let mut next = state.clone();
    let charger = state.workspace.chargers.get(&robot).copied();
    if let (Some(r), Some(c)) = (next.robots.get_mut(&robot), charger) {
        if r.pos == c {
            r.battery = r.battery_capacity;
            r.dead = false;
        }
    }
    next
}

/// What the rest of the system knows about a robot beyond its physics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobotStatus {
    #[default]
    Idle,
    Active,
    /// Holding position until robot `0` finishes its plan.
    Yielding(RobotId),
}

/// Published intention of a robot: the cells it expects to occupy from the
/// next tick on. Empty means it stays put.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub status: RobotStatus,
    pub cells: Vec<Cell>,
    pub plan_serial: u64,
    /// Already decided for the tick being assembled.
    pub committed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub id: RobotId,
    pub pos: Cell,
    pub battery: f64,
    pub capacity: f64,
    pub drain: f64,
    pub charger: Option<Cell>,
    pub status: RobotStatus,
    pub intent: Vec<Cell>,
    pub plan_serial: u64,
    pub committed: bool,
}

/// Read-only snapshot handed to controllers and monitors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldView {
    pub tick: u64,
    pub me: RobotId,
    #[serde(skip)]
    pub workspace: Arc<Workspace>,
    pub robots: Vec<RobotSnapshot>,
}

impl WorldView {
    pub fn robot(&self, id: RobotId) -> Option<&RobotSnapshot> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn own(&self) -> &RobotSnapshot {
        self.robot(self.me).expect("view contains its own robot")
    }

    pub fn others(&self) -> impl Iterator<Item = &RobotSnapshot> {
        let me = self.me;
        self.robots.iter().filter(move |r| r.id != me)
    }
}

/// Extract every violation reported in a trace, in order.
pub fn violations(trace: &[TraceRecord]) -> Vec<Violation> {
    trace
        .iter()
        .filter(|r| r.dir == Direction::Emit && r.event_kind == "Violation")
        .filter_map(|r| {
            let v = r.payload.get("Violation").unwrap_or(&r.payload);
            serde_json::from_value(v.clone()).ok()
        })
        .collect()
}
