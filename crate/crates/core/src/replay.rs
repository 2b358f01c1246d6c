//! Trace files and deterministic replay.
//!
//! A trace file is JSON Lines: the first line is a [`RunManifest`] wrapped
//! as `{"manifest": ...}`, every following line one trace record. Replay
//! re-runs the embedded configuration and compares the regenerated records
//! byte for byte.

use crate::runtime::{to_jsonl, TraceRecord};
use crate::scenarios::{run_scenario, RunError, ScenarioConfig};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    pub seed: u64,
    pub rta_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_path: Option<String>,
    /// The effective configuration, seed and RTA flag included.
    pub config: ScenarioConfig,
}

impl RunManifest {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            config_path: None,
            seed: config.seed,
            rta_enabled: config.rta_enabled,
            trace_path: None,
            metrics_path: None,
            config: config.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Head {
    manifest: RunManifest,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace has no manifest line")]
    MissingManifest,
    #[error("bad manifest: {0}")]
    BadManifest(#[from] serde_json::Error),
    #[error(transparent)]
    Run(#[from] RunError),
}

pub fn write_trace(
    mut out: impl Write,
    manifest: &RunManifest,
    records: &[TraceRecord],
) -> std::io::Result<()> {
    let head = serde_json::to_string(&Head {
        manifest: manifest.clone(),
    })?;
    writeln!(out, "{head}")?;
    out.write_all(to_jsonl(records).as_bytes())?;
    out.flush()
}

/// Manifest plus the raw record lines.
pub fn read_trace(path: impl AsRef<Path>) -> Result<(RunManifest, Vec<String>), ReplayError> {
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let head = lines.next().ok_or(ReplayError::MissingManifest)??;
    let Head { manifest } = serde_json::from_str(&head)?;
    let records = lines.collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, records))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayOutcome {
    Identical { records: usize },
    Diverged(Divergence),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    /// Zero-based record index.
    pub index: usize,
    /// Scheduler step of the first differing record, when it can be read.
    pub step: Option<u64>,
    pub recorded: Option<String>,
    pub replayed: Option<String>,
}

fn step_of(line: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()?
        .get("step")?
        .as_u64()
}

pub fn compare_lines(recorded: &[String], replayed: &[String]) -> ReplayOutcome {
    let n = recorded.len().max(replayed.len());
    for i in 0..n {
        let (a, b) = (recorded.get(i), replayed.get(i));
        if a != b {
            let step = a.or(b).and_then(|l| step_of(l));
            return ReplayOutcome::Diverged(Divergence {
                index: i,
                step,
                recorded: a.cloned(),
                replayed: b.cloned(),
            });
        }
    }
    ReplayOutcome::Identical { records: n }
}

/// Re-run the manifest's configuration and compare against `recorded`.
pub fn replay_lines(
    manifest: &RunManifest,
    recorded: &[String],
) -> Result<ReplayOutcome, ReplayError> {
    let out = run_scenario(&manifest.config)?;
    let replayed: Vec<String> = to_jsonl(&out.trace).lines().map(str::to_string).collect();
    Ok(compare_lines(recorded, &replayed))
}

pub fn replay_file(path: impl AsRef<Path>) -> Result<ReplayOutcome, ReplayError> {
    let (manifest, recorded) = read_trace(path)?;
    replay_lines(&manifest, &recorded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_reports_first_difference() {
        let a: Vec<String> = vec![r#"{"step":0}"#.into(), r#"{"step":1,"x":1}"#.into()];
        let mut b = a.clone();
        assert_eq!(
            compare_lines(&a, &b),
            ReplayOutcome::Identical { records: 2 }
        );
        b[1] = r#"{"step":1,"x":2}"#.into();
        match compare_lines(&a, &b) {
            ReplayOutcome::Diverged(d) => {
                assert_eq!(d.index, 1);
                assert_eq!(d.step, Some(1));
            }
            other => panic!("{other:?}"),
        }
        b.truncate(1);
        assert!(matches!(
            compare_lines(&a, &b),
            ReplayOutcome::Diverged(Divergence { index: 1, .. })
        ));
    }
}
