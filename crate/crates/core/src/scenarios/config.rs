use crate::geometry::Cell;
use crate::monitors::{self, MonitorError, BATTERY, COLLISION, GEOFENCE};
use crate::runtime::Policy;
use crate::world::{RobotId, RobotPhys, Workspace, WorldError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Surveillance,
    Delivery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionName {
    All,
    Boundary,
    None,
}

/// A set of cells: a name, an inclusive rectangle, or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Region {
    Named(RegionName),
    Rect { rect: [Cell; 2] },
    Cells(Vec<Cell>),
}

impl Region {
    pub fn resolve(&self, width: i32, height: i32) -> BTreeSet<Cell> {
        let grid = Workspace::open(width, height);
        match self {
            Region::Named(RegionName::All) => grid.cells().collect(),
            Region::Named(RegionName::Boundary) => grid.boundary().collect(),
            Region::Named(RegionName::None) => BTreeSet::new(),
            Region::Rect { rect: [a, b] } => grid
                .cells()
                .filter(|c| {
                    c.x >= a.x.min(b.x)
                        && c.x <= a.x.max(b.x)
                        && c.y >= a.y.min(b.y)
                        && c.y <= a.y.max(b.y)
                })
                .collect(),
            Region::Cells(cells) => cells.iter().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSpec {
    pub width: i32,
    pub height: i32,
    pub walls: Region,
    #[serde(default = "no_cells")]
    pub obstacles: Region,
    pub geofence: Region,
    pub danger_margin: u32,
}

fn no_cells() -> Region {
    Region::Named(RegionName::None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: RobotId,
    pub start: Cell,
    pub battery_capacity: f64,
    pub drain_per_move: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charger: Option<Cell>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub id: String,
    pub delta: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Destinations {
    /// Per-robot destination lists.
    Fixed(BTreeMap<RobotId, Vec<Cell>>),
    /// `count` seeded-random destinations per robot.
    Random { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub workspace: WorkspaceSpec,
    pub robots: Vec<RobotSpec>,
    /// Highest priority first.
    pub monitors: Vec<MonitorSpec>,
    pub destinations: Destinations,
    #[serde(default = "yes")]
    pub rta_enabled: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheduler: Policy,
    pub step_budget: u64,
}

fn yes() -> bool {
    true
}

const DELIVERY_ORDER: [&str; 3] = [COLLISION, GEOFENCE, BATTERY];

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn build_workspace(&self) -> Result<Workspace, ConfigError> {
        let s = &self.workspace;
        if s.width <= 0 || s.height <= 0 {
            return Err(invalid(format!(
                "grid must be non-empty, got {}x{}",
                s.width, s.height
            )));
        }
        let ws = Workspace {
            width: s.width,
            height: s.height,
            walls: s.walls.resolve(s.width, s.height),
            obstacles: s.obstacles.resolve(s.width, s.height),
            geofence: s.geofence.resolve(s.width, s.height),
            chargers: self
                .robots
                .iter()
                .filter_map(|r| r.charger.map(|c| (r.id, c)))
                .collect(),
            danger_margin: s.danger_margin,
        };
        ws.validate()?;
        Ok(ws)
    }

    pub fn robot_phys(&self) -> Vec<RobotPhys> {
        self.robots
            .iter()
            .map(|r| RobotPhys {
                id: r.id,
                pos: r.start,
                battery: r.battery_capacity,
                battery_capacity: r.battery_capacity,
                drain_per_move: r.drain_per_move,
                dead: false,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ws = self.build_workspace()?;
        let expected_robots = match self.kind {
            ScenarioKind::Surveillance => 1,
            ScenarioKind::Delivery => 2,
        };
        if self.robots.len() != expected_robots {
            return Err(invalid(format!(
                "{:?} needs exactly {expected_robots} robot(s), got {}",
                self.kind,
                self.robots.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            if !ids.insert(r.id) {
                return Err(invalid(format!("duplicate robot id {}", r.id)));
            }
            let capacity_ok = r.battery_capacity.is_finite() && r.battery_capacity > 0.0;
            let drain_ok = r.drain_per_move.is_finite() && r.drain_per_move >= 0.0;
            if !capacity_ok || !drain_ok {
                return Err(invalid(format!(
                    "robot {} has invalid battery parameters",
                    r.id
                )));
            }
        }
        crate::world::WorldState::new(std::sync::Arc::new(ws.clone()), self.robot_phys())?;

        if self.monitors.is_empty() {
            return Err(invalid("at least one monitor is required"));
        }
        let mut seen = BTreeSet::new();
        for m in &self.monitors {
            monitors::build(&m.id, m.delta, &ws)?;
            if !seen.insert(m.id.as_str()) {
                return Err(invalid(format!("monitor `{}` listed twice", m.id)));
            }
        }
        if self.kind == ScenarioKind::Delivery {
            // Monitors may be left out, but never reordered.
            let mut order = DELIVERY_ORDER.iter();
            for m in &self.monitors {
                if !order.any(|id| *id == m.id) {
                    return Err(invalid(format!(
                        "delivery monitors must follow the order {DELIVERY_ORDER:?}, got `{}` out of place",
                        m.id
                    )));
                }
            }
        }

        match &self.destinations {
            Destinations::Fixed(lists) => {
                for (robot, cells) in lists {
                    if !ids.contains(robot) {
                        return Err(invalid(format!(
                            "destinations given for unknown robot {robot}"
                        )));
                    }
                    if let Some(c) = cells.iter().find(|c| !ws.in_grid(**c)) {
                        return Err(invalid(format!("destination {c} is outside the grid")));
                    }
                }
            }
            Destinations::Random { .. } => {}
        }
        if self.step_budget == 0 {
            return Err(invalid("step budget must be positive"));
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: usize) -> Self {
        for m in &mut self.monitors {
            m.delta = delta;
        }
        self
    }
}
