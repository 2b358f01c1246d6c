//! `rta`: run the assurance scenarios, sweep the lookahead and replay traces.
//!
//! Exit codes: 0 safe run, 2 violations recorded, 3 replay diverged,
//! 1 usage or internal error.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rta::replay::{read_trace, replay_lines, write_trace, ReplayOutcome, RunManifest};
use rta::runtime::TraceRecord;
use rta::scenarios::{run_scenario, switch_lines, Metrics, ScenarioConfig};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_SAFE: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATIONS: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rta",
    version,
    about = "Run-time assurance scenarios on a grid world"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Scenario configuration (JSON).
    config: PathBuf,
    /// Seed for scheduling and destinations; overrides the config.
    #[arg(long, env = "RTA_SEED")]
    seed: Option<u64>,
    /// Enable or disable the assurance layer.
    #[arg(long, value_enum)]
    rta: Option<Switch>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario, print controller switches, write trace and metrics.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        /// Output directory for trace.jsonl and metrics.json.
        #[arg(long, default_value = "rta-out")]
        out: PathBuf,
    },
    /// Run once per lookahead value and print a comparison table.
    Sweep {
        #[command(flatten)]
        opts: RunOpts,
        /// A single value (`2`) or an inclusive range (`1..3`).
        #[arg(long, default_value = "1..2")]
        delta: String,
    },
    /// Re-run a trace's manifest and check the trace is reproduced exactly.
    Replay { trace: PathBuf },
    /// Recompute and print the metrics of a trace file.
    Metrics { trace: PathBuf },
}

fn load(opts: &RunOpts) -> Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(&opts.config)
        .with_context(|| format!("loading {}", opts.config.display()))?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(s) = opts.rta {
        config.rta_enabled = matches!(s, Switch::On);
    }
    Ok(config)
}

fn parse_deltas(spec: &str) -> Result<Vec<usize>> {
    let (lo, hi) = match spec.split_once("..") {
        Some((a, b)) => (a.trim().parse::<usize>()?, b.trim().parse::<usize>()?),
        None => {
            let d = spec.trim().parse::<usize>()?;
            (d, d)
        }
    };
    if lo == 0 || hi < lo {
        bail!("delta range must be 1 or more and ascending, got `{spec}`");
    }
    Ok((lo..=hi).collect())
}

fn cmd_run(opts: &RunOpts, out: &Path) -> Result<u8> {
    let config = load(opts)?;
    let output = run_scenario(&config)?;
    for line in switch_lines(&output.trace) {
        println!("{line}");
    }

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let trace_path = out.join("trace.jsonl");
    let metrics_path = out.join("metrics.json");
    let manifest = RunManifest {
        config_path: Some(opts.config.display().to_string()),
        trace_path: Some(trace_path.display().to_string()),
        metrics_path: Some(metrics_path.display().to_string()),
        ..RunManifest::new(&config)
    };
    write_trace(
        BufWriter::new(File::create(&trace_path)?),
        &manifest,
        &output.trace,
    )?;
    std::fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&output.metrics)? + "\n",
    )?;

    let m = &output.metrics;
    println!(
        "done: {} completed, {} aborted, {} skipped; {} violation(s){}",
        m.tasks_completed,
        m.tasks_aborted,
        m.tasks_skipped,
        m.total_violations(),
        if output.truncated {
            "; step budget exhausted"
        } else {
            ""
        }
    );
    for (kind, n) in m.violations.iter().filter(|(_, n)| **n > 0) {
        println!("violation {kind}: {n}");
    }
    println!("trace: {}", trace_path.display());
    println!("metrics: {}", metrics_path.display());
    Ok(if m.total_violations() > 0 {
        EXIT_VIOLATIONS
    } else {
        EXIT_SAFE
    })
}

fn cmd_sweep(opts: &RunOpts, delta: &str) -> Result<u8> {
    let base = load(opts)?;
    let deltas = parse_deltas(delta)?;
    println!(
        "{:>5} {:>17} {:>14} {:>11} {:>10}",
        "delta", "min_wall_distance", "sc_activations", "path_length", "violations"
    );
    let mut any_violation = false;
    for d in deltas {
        let config = base.clone().with_delta(d);
        let m = run_scenario(&config)?.metrics;
        let min_wall = m.robots.values().filter_map(|r| r.min_wall_distance).min();
        let path: u64 = m.robots.values().map(|r| r.path_length).sum();
        let sc: u64 = m.sc_activations.values().sum();
        any_violation |= m.total_violations() > 0;
        println!(
            "{:>5} {:>17} {:>14} {:>11} {:>10}",
            d,
            min_wall.map_or("-".to_string(), |v| v.to_string()),
            sc,
            path,
            m.total_violations()
        );
    }
    Ok(if any_violation {
        EXIT_VIOLATIONS
    } else {
        EXIT_SAFE
    })
}

fn cmd_replay(trace: &Path) -> Result<u8> {
    let (manifest, recorded) =
        read_trace(trace).with_context(|| format!("reading {}", trace.display()))?;
    match replay_lines(&manifest, &recorded)? {
        ReplayOutcome::Identical { records } => {
            println!("identical: {records} records reproduced");
            Ok(EXIT_SAFE)
        }
        ReplayOutcome::Diverged(d) => {
            let step = d.step.map_or("?".to_string(), |s| s.to_string());
            println!("diverged at record {} (step {step})", d.index);
            println!(
                "  recorded: {}",
                d.recorded.as_deref().unwrap_or("<end of trace>")
            );
            println!(
                "  replayed: {}",
                d.replayed.as_deref().unwrap_or("<end of trace>")
            );
            Ok(EXIT_DIVERGED)
        }
    }
}

fn cmd_metrics(trace: &Path) -> Result<u8> {
    let (manifest, lines) =
        read_trace(trace).with_context(|| format!("reading {}", trace.display()))?;
    let records = lines
        .iter()
        .map(|l| serde_json::from_str(l))
        .collect::<Result<Vec<TraceRecord>, _>>()
        .context("parsing trace records")?;
    let steps = records.last().map_or(0, |r| r.step + 1);
    let m = Metrics::from_trace(&manifest.config, &records, steps, false);
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(if m.total_violations() > 0 {
        EXIT_VIOLATIONS
    } else {
        EXIT_SAFE
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_SAFE
            });
        }
    };
    let result = match &cli.command {
        Cmd::Run { opts, out } => cmd_run(opts, out),
        Cmd::Sweep { opts, delta } => cmd_sweep(opts, delta),
        Cmd::Replay { trace } => cmd_replay(trace),
        Cmd::Metrics { trace } => cmd_metrics(trace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
