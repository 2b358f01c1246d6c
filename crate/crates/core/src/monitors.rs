//! Safety monitors and their safe controllers.
//!
//! Every monitor checks the first `delta` cells of a path: the cells the
//! robot would occupy from the next tick on. A path shorter than `delta` is
//! checked in full.

use crate::geometry::Cell;
use crate::planner::{plan_path, Knowledge};
use crate::rta::{ActiveRecovery, FirstStep, Monitor, Recovery, Until, Verdict};
use crate::world::{RobotSnapshot, RobotStatus, Workspace, WorldView};
use std::collections::BTreeSet;
use thiserror::Error;

pub const WALL: &str = "wall";
pub const COLLISION: &str = "collision";
pub const GEOFENCE: &str = "geofence";
pub const BATTERY: &str = "battery";

pub const KNOWN: [&str; 4] = [COLLISION, GEOFENCE, BATTERY, WALL];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("unknown monitor `{0}`")]
    Unknown(String),
    #[error("monitor `{0}` needs a lookahead of at least 1")]
    ZeroDelta(String),
}

pub fn build(id: &str, delta: usize, ws: &Workspace) -> Result<Box<dyn Monitor>, MonitorError> {
    if delta == 0 {
        return Err(MonitorError::ZeroDelta(id.to_string()));
    }
    Ok(match id {
        WALL => Box::new(WallMonitor::new(delta, ws)),
        COLLISION => Box::new(CollisionMonitor { delta }),
        GEOFENCE => Box::new(GeofenceMonitor { delta }),
        BATTERY => Box::new(BatteryMonitor { delta }),
        other => return Err(MonitorError::Unknown(other.to_string())),
    })
}

/// Cells within `danger_margin` (Chebyshev) of a wall or obstacle, the
/// blocked cells included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DangerSet(BTreeSet<Cell>);

impl DangerSet {
    pub fn new(ws: &Workspace) -> Self {
        let m = ws.danger_margin;
        let blocked: Vec<Cell> = ws.walls.union(&ws.obstacles).copied().collect();
        Self(
            ws.cells()
                .filter(|c| blocked.iter().any(|b| b.chebyshev(*c) <= m))
                .collect(),
        )
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.0.contains(&c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn horizon(delta: usize, path: &[Cell]) -> &[Cell] {
    &path[..delta.min(path.len())]
}

pub struct WallMonitor {
    delta: usize,
    danger: DangerSet,
}

impl WallMonitor {
    pub fn new(delta: usize, ws: &Workspace) -> Self {
        Self {
            delta,
            danger: DangerSet::new(ws),
        }
    }

    pub fn danger(&self) -> &DangerSet {
        &self.danger
    }
}

impl Monitor for WallMonitor {
    fn id(&self) -> &str {
        WALL
    }

    fn delta(&self) -> usize {
        self.delta
    }

    fn check(&self, _view: &WorldView, path: &[Cell]) -> Verdict {
        let h = horizon(self.delta, path);
        match h.iter().find(|c| self.danger.contains(**c)) {
            Some(c) => Verdict::unsafe_(
                WALL,
                format!("waypoint {c} is within the wall margin"),
                h.len(),
            ),
            None => Verdict::safe(h.len()),
        }
    }

    /// Drive to the workspace centre, then resume from the first waypoint
    /// past the dangerous one that is clear of the margin.
    fn safe_controller(
        &self,
        view: &WorldView,
        plan: &[Cell],
        _active: Option<ActiveRecovery<'_>>,
    ) -> Recovery {
        let ws = &view.workspace;
        let Ok(path) = plan_path(&Knowledge::certified(ws), view.own().pos, ws.center()) else {
            return Recovery::abort();
        };
        let h = horizon(self.delta, plan);
        let resume = match h.iter().position(|c| self.danger.contains(*c)) {
            Some(d) => plan
                .iter()
                .enumerate()
                .skip(d + 1)
                .find(|(_, c)| !self.danger.contains(**c))
                .map(|(i, _)| plan[i..].to_vec())
                .unwrap_or_default(),
            None => plan.to_vec(),
        };
        Recovery {
            replace_plan: Some(resume),
            ..Recovery::drive(path.waypoints, Until::PathDone)
        }
    }
}

pub struct GeofenceMonitor {
    delta: usize,
}

impl Monitor for GeofenceMonitor {
    fn id(&self) -> &str {
        GEOFENCE
    }

    fn delta(&self) -> usize {
        self.delta
    }

    fn check(&self, view: &WorldView, path: &[Cell]) -> Verdict {
        let h = horizon(self.delta, path);
        match h.iter().find(|c| !view.workspace.in_fence(**c)) {
            Some(c) => Verdict::unsafe_(
                GEOFENCE,
                format!("waypoint {c} is outside the geofence"),
                h.len(),
            ),
            None => Verdict::safe(h.len()),
        }
    }

    fn safe_controller(
        &self,
        _view: &WorldView,
        _plan: &[Cell],
        _active: Option<ActiveRecovery<'_>>,
    ) -> Recovery {
        Recovery::abort()
    }
}

pub struct BatteryMonitor {
    delta: usize,
}

/// Energy needed to drive `k` steps and then reach the charger from `last`.
pub fn return_cost(k: usize, hops_home: u32, drain: f64) -> f64 {
    (k as f64 + hops_home as f64) * drain
}

impl Monitor for BatteryMonitor {
    fn id(&self) -> &str {
        BATTERY
    }

    fn delta(&self) -> usize {
        self.delta
    }

    fn check(&self, view: &WorldView, path: &[Cell]) -> Verdict {
        let me = view.own();
        let h = horizon(self.delta, path);
        let (Some(charger), Some(&last)) = (me.charger, h.last()) else {
            return Verdict::safe(h.len());
        };
        let field = Knowledge::static_obstacles(&view.workspace).distances_to(charger);
        if let Some(c) = h.iter().find(|c| field.get(**c).is_none()) {
            return Verdict::unsafe_(BATTERY, format!("charger unreachable from {c}"), h.len());
        }
        let cost = return_cost(h.len(), field.get(last).unwrap_or(0), me.drain);
        if me.battery < cost {
            Verdict::unsafe_(
                BATTERY,
                format!("battery {:.1} below return cost {:.1}", me.battery, cost),
                h.len(),
            )
        } else {
            Verdict::safe(h.len())
        }
    }

    /// Return to the charger and stay in control until docked.
    fn safe_controller(
        &self,
        view: &WorldView,
        _plan: &[Cell],
        _active: Option<ActiveRecovery<'_>>,
    ) -> Recovery {
        let me = view.own();
        let Some(charger) = me.charger else {
            return Recovery::abort();
        };
        if me.pos == charger {
            // Docked and still short: the plan cannot be flown on this battery.
            return Recovery::abort();
        }
        let ws = &view.workspace;
        let path = plan_path(&Knowledge::certified(ws), me.pos, charger)
            .or_else(|_| plan_path(&Knowledge::static_obstacles(ws), me.pos, charger));
        match path {
            Ok(p) => Recovery::drive(p.waypoints, Until::Docked(charger)),
            Err(_) => Recovery::abort(),
        }
    }
}

pub struct CollisionMonitor {
    delta: usize,
}

impl CollisionMonitor {
    /// A certified detour around `other`'s current and next cell that rejoins
    /// `followed` at the earliest possible waypoint, leaves enough charge to
    /// get home afterwards, and is itself conflict-free.
    fn detour(
        &self,
        view: &WorldView,
        followed: &[Cell],
        other: &RobotSnapshot,
    ) -> Option<Vec<Cell>> {
        let me = view.own();
        let ws = &view.workspace;
        let mut avoid = vec![other.pos];
        avoid.extend(other.intent.first().copied());
        let certified = Knowledge::certified(ws);
        let around = certified.clone().with_blocked(avoid.iter().copied());
        let home = me
            .charger
            .map(|c| Knowledge::static_obstacles(ws).distances_to(c));
        for (j, &target) in followed.iter().enumerate() {
            if !around.passable(target) {
                continue;
            }
            let Ok(detour) = plan_path(&around, me.pos, target) else {
                continue;
            };
            if detour.is_empty() {
                continue;
            }
            if let Some(home) = &home {
                match home.get(target) {
                    Some(d) if me.battery >= return_cost(detour.len(), d, me.drain) => {}
                    _ => continue,
                }
            }
            let path: Vec<Cell> = detour
                .waypoints
                .into_iter()
                .chain(followed[j + 1..].iter().copied())
                .collect();
            if first_conflict(view, &path, self.delta).is_none() {
                return Some(path);
            }
        }
        None
    }
}

/// Position at step `i`, where index 0 is the current cell and the last
/// known cell repeats once the sequence runs out.
fn at(pos: Cell, cells: &[Cell], i: usize) -> Cell {
    match i {
        0 => pos,
        _ => cells.get(i - 1).or(cells.last()).copied().unwrap_or(pos),
    }
}

/// Whether two aligned trajectories share a cell or trade places within `k`
/// steps. Entering a cell the other is just leaving also counts.
pub fn trajectories_conflict(
    me: Cell,
    mine: &[Cell],
    other: Cell,
    theirs: &[Cell],
    k: usize,
) -> bool {
    (1..=k).any(|i| {
        let (m, o) = (at(me, mine, i), at(other, theirs, i));
        let (m0, o0) = (at(me, mine, i - 1), at(other, theirs, i - 1));
        m == o || m == o0 || o == m0
    })
}

/// The first other robot, by id, whose published intent conflicts with `path`.
pub fn first_conflict<'a>(
    view: &'a WorldView,
    path: &[Cell],
    delta: usize,
) -> Option<&'a RobotSnapshot> {
    let me = view.own();
    let h = horizon(delta, path);
    if h.is_empty() {
        return None;
    }
    view.others()
        .find(|o| trajectories_conflict(me.pos, h, o.pos, &o.intent, h.len()))
}

impl Monitor for CollisionMonitor {
    fn id(&self) -> &str {
        COLLISION
    }

    fn delta(&self) -> usize {
        self.delta
    }

    fn check(&self, view: &WorldView, path: &[Cell]) -> Verdict {
        let h = horizon(self.delta, path);
        match first_conflict(view, path, self.delta) {
            Some(o) => Verdict::unsafe_(
                COLLISION,
                format!("path conflicts with robot {}", o.id),
                h.len(),
            ),
            None => Verdict::safe(h.len()),
        }
    }

    fn rechecks_own_recovery(&self) -> bool {
        true
    }

    /// The higher-numbered robot yields to a robot that is executing.
    /// Otherwise route around the other robot's current and next cell,
    /// provided the detour still leaves enough charge to get home. Failing
    /// that, hold for one tick if the other is moving, else give up the plan.
    fn safe_controller(
        &self,
        view: &WorldView,
        plan: &[Cell],
        active: Option<ActiveRecovery<'_>>,
    ) -> Recovery {
        let me = view.own();
        let followed = active.as_ref().map(|a| a.path).unwrap_or(plan);
        let Some(other) = first_conflict(view, followed, self.delta) else {
            return Recovery::hold(Until::Immediate);
        };
        let executing = other.status != RobotStatus::Idle;
        if me.id > other.id && executing {
            return Recovery {
                yield_to: Some(other.id),
                ..Recovery::hold(Until::OtherDone {
                    robot: other.id,
                    serial: other.plan_serial,
                })
            };
        }

        if let Some(path) = self.detour(view, followed, other) {
            return match active {
                Some(a) => Recovery::drive(path, a.until.clone()),
                None => Recovery {
                    replace_plan: Some(path),
                    first: FirstStep::FollowPlan,
                    ..Recovery::hold(Until::Immediate)
                },
            };
        }
        if other.status == RobotStatus::Active {
            Recovery::hold(Until::Immediate)
        } else {
            Recovery::abort()
        }
    }
}
