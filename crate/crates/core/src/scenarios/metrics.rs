use super::config::{ScenarioConfig, ScenarioKind};
use crate::geometry::Cell;
use crate::rta::ControllerKind;
use crate::runtime::{Direction, TraceRecord};
use crate::stack::{Msg, Outcome};
use crate::world::{RobotId, ViolationKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotMetrics {
    /// Number of cell changes.
    pub path_length: u64,
    /// Smallest Chebyshev distance to a wall seen along the path.
    pub min_wall_distance: Option<u32>,
    pub final_position: Option<Cell>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub rta_enabled: bool,
    pub steps: u64,
    pub ticks: u64,
    pub truncated: bool,
    pub tasks_completed: u64,
    pub tasks_aborted: u64,
    pub tasks_skipped: u64,
    pub violations: BTreeMap<String, u64>,
    pub sc_activations: BTreeMap<String, u64>,
    /// Robot-ticks decided by a safe controller.
    pub ticks_in_sc: u64,
    pub robots: BTreeMap<RobotId, RobotMetrics>,
}

impl Metrics {
    pub fn total_violations(&self) -> u64 {
        self.violations.values().sum()
    }

    pub fn violations_of(&self, kind: ViolationKind) -> u64 {
        self.violations.get(kind.as_str()).copied().unwrap_or(0)
    }

    pub fn from_trace(
        config: &ScenarioConfig,
        trace: &[TraceRecord],
        steps: u64,
        truncated: bool,
    ) -> Self {
        let ws = config.build_workspace().ok();
        let mut m = Metrics {
            schema_version: SCHEMA_VERSION,
            scenario: config.kind,
            seed: config.seed,
            rta_enabled: config.rta_enabled,
            steps,
            ticks: trace.last().map_or(0, |r| r.tick),
            truncated,
            tasks_completed: 0,
            tasks_aborted: 0,
            tasks_skipped: 0,
            violations: ViolationKind::ALL
                .iter()
                .map(|k| (k.as_str().to_string(), 0))
                .collect(),
            sc_activations: config.monitors.iter().map(|s| (s.id.clone(), 0)).collect(),
            ticks_in_sc: 0,
            robots: config
                .robots
                .iter()
                .map(|r| (r.id, RobotMetrics::default()))
                .collect(),
        };

        for rec in trace {
            let relevant = matches!(
                (rec.dir, rec.event_kind.as_str()),
                (Direction::Emit, "Violation" | "CheckReply")
                    | (Direction::Recv, "TaskReport" | "SimAck")
            );
            if !relevant {
                continue;
            }
            let Ok(msg) = serde_json::from_value::<Msg>(rec.payload.clone()) else {
                continue;
            };
            match msg {
                Msg::Violation(v) => {
                    *m.violations.entry(v.kind.as_str().to_string()).or_default() += 1
                }
                Msg::CheckReply { decision } => {
                    if matches!(decision.controller, ControllerKind::Safe(_)) {
                        m.ticks_in_sc += 1;
                    }
                    if let Some(ControllerKind::Safe(id)) = decision.switched.map(|s| s.to) {
                        *m.sc_activations.entry(id).or_default() += 1;
                    }
                }
                Msg::TaskReport { outcome, .. } => match outcome {
                    Outcome::Completed => m.tasks_completed += 1,
                    Outcome::Aborted => m.tasks_aborted += 1,
                    Outcome::Skipped => m.tasks_skipped += 1,
                },
                Msg::SimAck { view } => {
                    for r in &view.robots {
                        let entry = m.robots.entry(r.id).or_default();
                        if entry.final_position.is_some_and(|p| p != r.pos) {
                            entry.path_length += 1;
                        }
                        entry.final_position = Some(r.pos);
                        if let Some(d) = ws.as_ref().and_then(|ws| ws.wall_distance(r.pos)) {
                            entry.min_wall_distance =
                                Some(entry.min_wall_distance.map_or(d, |x| x.min(d)));
                        }
                    }
                }
                _ => {}
            }
        }
        m
    }
}

/// One human-readable line per controller switch, in trace order.
pub fn switch_lines(trace: &[TraceRecord]) -> Vec<String> {
    trace
        .iter()
        .filter(|r| r.dir == Direction::Emit && r.event_kind == "CheckReply")
        .filter_map(|r| {
            let Ok(Msg::CheckReply { decision }) = serde_json::from_value::<Msg>(r.payload.clone())
            else {
                return None;
            };
            decision.switched.map(|s| {
                format!(
                    "tick {} {}: {} -> {} ({})",
                    r.tick, r.name, s.from, s.to, s.reason
                )
            })
        })
        .collect()
}
