//! Simplex run-time assurance module.
//!
//! An [`RtaModule`] wraps an untrusted advanced controller (AC) with a
//! priority-ordered list of [`Monitor`]s. Each monitor looks `delta`
//! waypoints ahead and, when it reports unsafe, supplies its own safe
//! controller (SC). The module:
//!
//! * hands control to the SC of the highest-priority unsafe monitor,
//! * lets a higher-priority monitor preempt a running recovery,
//! * returns control to the AC only once the recovery has completed and a
//!   fresh evaluation of every monitor is safe.
//!
//! Monitors are evaluated in full on every consultation, even after the
//! first unsafe verdict, so the trace always explains a switch.

use crate::geometry::Cell;
use crate::planner::{plan_path, Knowledge};
use crate::world::{Command, RobotId, RobotStatus, WorldView};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Advanced,
    /// Safe controller of the named monitor.
    Safe(String),
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerKind::Advanced => f.write_str("AC"),
            ControllerKind::Safe(m) => write!(f, "SC[{m}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Safe,
    Unsafe,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<String>,
    pub reason: String,
    pub horizon_checked: usize,
}

impl Verdict {
    pub fn safe(horizon_checked: usize) -> Self {
        Self {
            status: Status::Safe,
            monitor: None,
            reason: String::new(),
            horizon_checked,
        }
    }

    pub fn unsafe_(monitor: &str, reason: impl Into<String>, horizon_checked: usize) -> Self {
        Self {
            status: Status::Unsafe,
            monitor: Some(monitor.to_string()),
            reason: reason.into(),
            horizon_checked,
        }
    }

    pub fn is_safe(&self) -> bool {
        self.status == Status::Safe
    }
}

/// When a recovery counts as finished.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Until {
    /// The recovery path has been driven.
    PathDone,
    /// Path driven and the robot sits on this charger.
    Docked(Cell),
    /// The other robot went idle or started a different plan.
    OtherDone { robot: RobotId, serial: u64 },
    /// One step only.
    Immediate,
}

/// What the safe controller does on the tick it takes over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FirstStep {
    /// Move along the recovery path.
    Drive,
    /// Move to the first cell of the replacement plan and keep following it.
    FollowPlan,
    /// Stay in place.
    Hold,
    /// Give up the current plan.
    Abort,
}

/// A safe controller's answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recovery {
    pub path: Vec<Cell>,
    pub until: Until,
    /// Replacement for the interrupted plan's remaining waypoints.
    pub replace_plan: Option<Vec<Cell>>,
    pub first: FirstStep,
    /// Set while holding for another robot.
    pub yield_to: Option<RobotId>,
}

impl Recovery {
    pub fn abort() -> Self {
        Self {
            path: Vec::new(),
            until: Until::Immediate,
            replace_plan: Some(Vec::new()),
            first: FirstStep::Abort,
            yield_to: None,
        }
    }

    pub fn hold(until: Until) -> Self {
        Self {
            path: Vec::new(),
            until,
            replace_plan: None,
            first: FirstStep::Hold,
            yield_to: None,
        }
    }

    pub fn drive(path: Vec<Cell>, until: Until) -> Self {
        Self {
            path,
            until,
            replace_plan: None,
            first: FirstStep::Drive,
            yield_to: None,
        }
    }

    /// Cells the robot would occupy from the next tick on.
    fn intended(&self) -> Vec<Cell> {
        match self.first {
            FirstStep::Drive => self.path.clone(),
            FirstStep::FollowPlan => self.replace_plan.clone().unwrap_or_default(),
            FirstStep::Hold | FirstStep::Abort => Vec::new(),
        }
    }
}

/// The recovery a safe controller is being asked to replace, if any.
pub struct ActiveRecovery<'a> {
    pub path: &'a [Cell],
    pub until: &'a Until,
}

pub trait Monitor: Send + Sync {
    fn id(&self) -> &str;

    fn delta(&self) -> usize;

    /// Pure check of the next `delta` cells of `path` (cells from the next
    /// tick on).
    fn check(&self, view: &WorldView, path: &[Cell]) -> Verdict;

    /// Safe controller. `plan` is the interrupted plan; `active` is set when
    /// another recovery is being preempted.
    fn safe_controller(
        &self,
        view: &WorldView,
        plan: &[Cell],
        active: Option<ActiveRecovery<'_>>,
    ) -> Recovery;

    /// Whether this monitor re-checks its own running recovery. Hazards that
    /// move (other robots) can invalidate a recovery after it started.
    fn rechecks_own_recovery(&self) -> bool {
        false
    }
}

/// Untrusted controller that drives towards the next waypoint.
pub trait AdvancedController: Send + Sync {
    fn commands(&self, view: &WorldView, next: Cell) -> Vec<Command>;
}

/// Open-loop waypoint follower: one step towards the next waypoint,
/// trusting that the waypoint is where the plan says it is.
#[derive(Clone, Copy, Debug, Default)]
pub struct WaypointFollower;

impl AdvancedController for WaypointFollower {
    fn commands(&self, view: &WorldView, next: Cell) -> Vec<Command> {
        let pos = view.own().pos;
        if pos == next {
            return Vec::new();
        }
        if pos.is_adjacent(next) {
            return vec![Command::MoveTo(next)];
        }
        let dist = pos.manhattan(next);
        pos.neighbors()
            .into_iter()
            .find(|n| n.manhattan(next) < dist)
            .map(Command::MoveTo)
            .into_iter()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switch {
    pub from: ControllerKind,
    pub to: ControllerKind,
    pub reason: String,
}

/// Outcome of one consultation of the module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub controller: ControllerKind,
    pub verdicts: Vec<Verdict>,
    /// `None` once there is nothing left to do.
    pub command: Option<Command>,
    /// New remaining plan, applied before `advance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replace_plan: Option<Vec<Cell>>,
    /// The command consumes the first remaining waypoint.
    pub advance: bool,
    /// Cells the robot expects to occupy from the next tick on.
    pub intent: Vec<Cell>,
    pub status: RobotStatus,
    /// A recovery is still running after this step.
    pub busy: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switched: Option<Switch>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RtaError {
    #[error("switchback queried while the advanced controller is in charge")]
    NotInSafeMode,
    #[error("an assurance module needs at least one monitor")]
    NoMonitors,
}

#[derive(Clone, Debug)]
struct Engaged {
    monitor: usize,
    path: VecDeque<Cell>,
    until: Until,
    yield_to: Option<RobotId>,
}

impl Engaged {
    fn complete(&self, view: &WorldView) -> bool {
        match &self.until {
            Until::Immediate => true,
            Until::PathDone => self.path.is_empty(),
            Until::Docked(c) => self.path.is_empty() && view.own().pos == *c,
            Until::OtherDone { robot, serial } => match view.robot(*robot) {
                Some(o) => o.status == RobotStatus::Idle || o.plan_serial != *serial,
                None => true,
            },
        }
    }
}

pub struct RtaModule {
    monitors: Vec<Box<dyn Monitor>>,
    advanced: Box<dyn AdvancedController>,
    enabled: bool,
    mode: ControllerKind,
    engaged: Option<Engaged>,
}

impl RtaModule {
    /// Monitors are given highest priority first.
    pub fn new(
        monitors: Vec<Box<dyn Monitor>>,
        advanced: Box<dyn AdvancedController>,
    ) -> Result<Self, RtaError> {
        if monitors.is_empty() {
            return Err(RtaError::NoMonitors);
        }
        Ok(Self {
            monitors,
            advanced,
            enabled: true,
            mode: ControllerKind::Advanced,
            engaged: None,
        })
    }

    /// Monitors still observe, but the advanced controller is always used.
    pub fn disabled(
        monitors: Vec<Box<dyn Monitor>>,
        advanced: Box<dyn AdvancedController>,
    ) -> Self {
        Self {
            monitors,
            advanced,
            enabled: false,
            mode: ControllerKind::Advanced,
            engaged: None,
        }
    }

    pub fn mode(&self) -> &ControllerKind {
        &self.mode
    }

    pub fn monitor_ids(&self) -> Vec<&str> {
        self.monitors.iter().map(|m| m.id()).collect()
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Every monitor's verdict, in priority order.
    pub fn evaluate(&self, view: &WorldView, path: &[Cell]) -> Vec<Verdict> {
        self.monitors.iter().map(|m| m.check(view, path)).collect()
    }

    /// Which controller the monitors call for, without touching the mode.
    pub fn decide(&self, view: &WorldView, path: &[Cell]) -> (ControllerKind, Vec<Verdict>) {
        let verdicts = self.evaluate(view, path);
        let kind = match first_unsafe(&verdicts) {
            Some(i) => ControllerKind::Safe(self.monitors[i].id().to_string()),
            None => ControllerKind::Advanced,
        };
        (kind, verdicts)
    }

    /// True iff the running recovery has finished and the plan that would be
    /// resumed passes every monitor.
    pub fn switchback_eligible(&self, view: &WorldView, plan: &[Cell]) -> Result<bool, RtaError> {
        let Some(engaged) = &self.engaged else {
            return Err(RtaError::NotInSafeMode);
        };
        if !engaged.complete(view) {
            return Ok(false);
        }
        let resumed = reconnect(view, plan);
        Ok(first_unsafe(&self.evaluate(view, &resumed)).is_none())
    }

    /// One consultation: pick the controller for this step and produce its
    /// command.
    pub fn act(&mut self, view: &WorldView, plan: &[Cell]) -> Decision {
        if !self.enabled {
            let verdicts = self.evaluate(view, plan);
            return self.advanced_step(view, plan.to_vec(), None, verdicts, false);
        }

        let mut replaced = None;
        let mut current: Vec<Cell> = plan.to_vec();
        if let Some(engaged) = &self.engaged {
            if !engaged.complete(view) {
                let path: Vec<Cell> = engaged.path.iter().copied().collect();
                let verdicts = self.evaluate(view, &path);
                if let Some(i) = first_unsafe(&verdicts) {
                    let own = i == engaged.monitor && self.monitors[i].rechecks_own_recovery();
                    if i < engaged.monitor || own {
                        let until = engaged.until.clone();
                        let active = ActiveRecovery {
                            path: &path,
                            until: &until,
                        };
                        return self.engage(i, view, &current, Some(active), verdicts, None);
                    }
                }
                return self.continue_recovery(verdicts);
            }
            let resumed = reconnect(view, plan);
            if resumed != plan {
                replaced = Some(resumed.clone());
            }
            current = resumed;
        }

        let verdicts = self.evaluate(view, &current);
        match first_unsafe(&verdicts) {
            Some(i) => self.engage(i, view, &current, None, verdicts, replaced),
            None => {
                let was_safe = self.engaged.take().is_some();
                self.advanced_step(view, current, replaced, verdicts, was_safe)
            }
        }
    }

    fn advanced_step(
        &mut self,
        view: &WorldView,
        plan: Vec<Cell>,
        replaced: Option<Vec<Cell>>,
        verdicts: Vec<Verdict>,
        switching_back: bool,
    ) -> Decision {
        let switched = switching_back.then(|| Switch {
            from: std::mem::replace(&mut self.mode, ControllerKind::Advanced),
            to: ControllerKind::Advanced,
            reason: "recovery complete; all monitors safe".into(),
        });
        self.mode = ControllerKind::Advanced;
        let Some(&next) = plan.first() else {
            return Decision {
                controller: ControllerKind::Advanced,
                verdicts,
                command: None,
                replace_plan: replaced,
                advance: false,
                intent: Vec::new(),
                status: RobotStatus::Active,
                busy: false,
                switched,
            };
        };
        let commands = self.advanced.commands(view, next);
        let command = match commands.into_iter().next() {
            Some(c) => c,
            None if view.own().pos == next || !self.enabled => Command::Wait,
            None => {
                // An empty answer for an unreached waypoint is a fault of the
                // untrusted controller; the top-priority SC takes over.
                let mut d = self.engage(0, view, &plan, None, verdicts, replaced);
                if let Some(s) = d.switched.as_mut() {
                    s.reason = format!("advanced controller produced no command for {next}");
                }
                return d;
            }
        };
        Decision {
            controller: ControllerKind::Advanced,
            verdicts,
            command: Some(command),
            replace_plan: replaced,
            advance: true,
            intent: plan,
            status: RobotStatus::Active,
            busy: false,
            switched,
        }
    }

    fn continue_recovery(&mut self, verdicts: Vec<Verdict>) -> Decision {
        let engaged = self.engaged.as_mut().expect("recovery in progress");
        let intent: Vec<Cell> = engaged.path.iter().copied().collect();
        let command = match engaged.path.pop_front() {
            Some(c) => Command::MoveTo(c),
            None => Command::Wait,
        };
        Decision {
            controller: self.mode.clone(),
            verdicts,
            command: Some(command),
            replace_plan: None,
            advance: false,
            intent,
            status: status_for(engaged.yield_to),
            busy: true,
            switched: None,
        }
    }

    fn engage(
        &mut self,
        trigger: usize,
        view: &WorldView,
        plan: &[Cell],
        active: Option<ActiveRecovery<'_>>,
        verdicts: Vec<Verdict>,
        replaced: Option<Vec<Cell>>,
    ) -> Decision {
        let mut index = trigger;
        // A higher-priority SC called in because of a lower one's recovery
        // works on that recovery, not on the plan.
        let mut escalated: Option<(Vec<Cell>, Until)> = None;
        let mut carried_edit = None;
        let mut recovery = loop {
            let active = match &escalated {
                Some((path, until)) => Some(ActiveRecovery { path, until }),
                None => active.as_ref().map(|a| ActiveRecovery {
                    path: a.path,
                    until: a.until,
                }),
            };
            let candidate = self.monitors[index].safe_controller(view, plan, active);
            let intended = candidate.intended();
            let higher: Vec<Verdict> = self.monitors[..index]
                .iter()
                .map(|m| m.check(view, &intended))
                .collect();
            match first_unsafe(&higher) {
                Some(j) => {
                    if candidate.first == FirstStep::Drive {
                        escalated = Some((intended, candidate.until.clone()));
                        carried_edit = candidate.replace_plan.clone();
                    }
                    index = j;
                }
                None => break candidate,
            }
        };
        if recovery.replace_plan.is_none() {
            recovery.replace_plan = carried_edit;
        }

        let to = ControllerKind::Safe(self.monitors[index].id().to_string());
        let reason = verdicts
            .get(trigger)
            .filter(|v| !v.is_safe())
            .map(|v| v.reason.clone())
            .unwrap_or_else(|| "preempted by higher-priority monitor".into());
        let switched = (self.mode != to).then(|| Switch {
            from: self.mode.clone(),
            to: to.clone(),
            reason,
        });
        self.mode = to.clone();

        let intent = recovery.intended();
        let mut path: VecDeque<Cell> = recovery.path.into();
        let replace_plan = recovery.replace_plan.or(replaced);
        let (command, advance) = match recovery.first {
            FirstStep::Drive => match path.pop_front() {
                Some(c) => (Command::MoveTo(c), false),
                None => (Command::Wait, false),
            },
            FirstStep::FollowPlan => match replace_plan.as_ref().and_then(|p| p.first()) {
                Some(c) => (Command::MoveTo(*c), true),
                None => (Command::Wait, false),
            },
            FirstStep::Hold => (Command::Wait, false),
            FirstStep::Abort => (Command::PlanAbort, false),
        };
        self.engaged = Some(Engaged {
            monitor: index,
            path,
            until: recovery.until,
            yield_to: recovery.yield_to,
        });
        Decision {
            controller: to,
            verdicts,
            command: Some(command),
            replace_plan,
            advance,
            intent,
            status: status_for(recovery.yield_to),
            busy: true,
            switched,
        }
    }
}

fn status_for(yield_to: Option<RobotId>) -> RobotStatus {
    match yield_to {
        Some(r) => RobotStatus::Yielding(r),
        None => RobotStatus::Active,
    }
}

pub fn first_unsafe(verdicts: &[Verdict]) -> Option<usize> {
    verdicts.iter().position(|v| !v.is_safe())
}

/// Re-attach a plan to the robot's current position after a recovery moved
/// it: drop a leading waypoint the robot stands on, or plan a certified
/// connector to the first waypoint. An unreachable plan resumes as empty.
pub fn reconnect(view: &WorldView, plan: &[Cell]) -> Vec<Cell> {
    let pos = view.own().pos;
    let Some(&first) = plan.first() else {
        return Vec::new();
    };
    if first == pos {
        return plan[1..].to_vec();
    }
    if pos.is_adjacent(first) {
        return plan.to_vec();
    }
    match plan_path(&Knowledge::certified(&view.workspace), pos, first) {
        Ok(connector) => connector
            .waypoints
            .into_iter()
            .chain(plan[1..].iter().copied())
            .collect(),
        Err(_) => Vec::new(),
    }
}
