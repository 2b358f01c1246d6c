use rta::runtime::{Direction, TraceRecord};
use rta::scenarios::{
    run_scenario, switch_lines, ConfigError, Destinations, Metrics, ScenarioConfig, ScenarioKind,
};
use rta::stack::check_protocol;
use rta::world::ViolationKind;
use rta::Cell;
use std::collections::BTreeMap;

fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(format!(
        "{}/configs/{name}.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

/// Decisions sent by each robot's decision module, in trace order.
fn decisions(trace: &[TraceRecord]) -> BTreeMap<u32, Vec<serde_json::Value>> {
    let mut out: BTreeMap<u32, Vec<serde_json::Value>> = BTreeMap::new();
    for r in trace
        .iter()
        .filter(|r| r.dir == Direction::Emit && r.event_kind == "CheckReply")
    {
        let robot: u32 = r.name.trim_start_matches("DecisionModule").parse().unwrap();
        out.entry(robot)
            .or_default()
            .push(r.payload["CheckReply"]["decision"].clone());
    }
    out
}

fn yielded(decision: &serde_json::Value) -> bool {
    decision["status"].get("yielding").is_some()
}

#[test]
fn machine_counts() {
    assert_eq!(
        run_scenario(&config("surveillance")).unwrap().machine_count,
        6
    );
    assert_eq!(run_scenario(&config("delivery")).unwrap().machine_count, 10);
}

#[test]
fn default_runs_are_safe_and_complete() {
    for name in ["surveillance", "delivery"] {
        let out = run_scenario(&config(name)).unwrap();
        assert!(!out.truncated, "{name}");
        assert_eq!(out.metrics.total_violations(), 0, "{name}");
        check_protocol(&out.trace, out.truncated).unwrap();
        let m = &out.metrics;
        let tasks = m.tasks_completed + m.tasks_aborted + m.tasks_skipped;
        let expected = match name {
            "surveillance" => 10,
            _ => 40,
        };
        assert_eq!(tasks, expected, "{name}");
    }
}

#[test]
fn baseline_strikes_walls_and_never_switches() {
    let cfg = ScenarioConfig {
        rta_enabled: false,
        ..config("surveillance")
    };
    let out = run_scenario(&cfg).unwrap();
    assert!(out.metrics.violations_of(ViolationKind::WallStrike) >= 1);
    assert!(switch_lines(&out.trace).is_empty());
    assert!(decisions(&out.trace)
        .values()
        .flatten()
        .all(|d| d["controller"] == "advanced"));
    assert_eq!(out.metrics.sc_activations.values().sum::<u64>(), 0);
}

#[test]
fn rta_keeps_surveillance_clear_of_the_margin() {
    for delta in [1, 2] {
        let out = run_scenario(&config("surveillance").with_delta(delta)).unwrap();
        assert_eq!(out.metrics.total_violations(), 0);
        let r = &out.metrics.robots[&1];
        assert!(r.min_wall_distance.unwrap() > 1, "delta {delta}");
        assert!(!switch_lines(&out.trace).is_empty());
    }
}

#[test]
fn switch_lines_pair_up() {
    let out = run_scenario(&config("surveillance")).unwrap();
    let lines = switch_lines(&out.trace);
    let into_sc = lines
        .iter()
        .filter(|l| l.contains("AC -> SC[wall]"))
        .count();
    let back = lines
        .iter()
        .filter(|l| l.contains("SC[wall] -> AC"))
        .count();
    assert_eq!(into_sc as u64, out.metrics.sc_activations["wall"]);
    assert_eq!(into_sc, back);
}

#[test]
fn same_destination_makes_exactly_one_robot_wait() {
    let target = Cell::new(3, 3);
    let mut cfg = config("delivery");
    cfg.destinations = Destinations::Fixed(BTreeMap::from([(1, vec![target]), (2, vec![target])]));
    let (mut yields, mut waits) = (0, 0);
    for seed in 0..20 {
        cfg.seed = seed;
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.metrics.total_violations(), 0, "seed {seed}");
        assert!(out.metrics.sc_activations["collision"] >= 1, "seed {seed}");
        let d = decisions(&out.trace);
        let robots_where = |pred: &dyn Fn(&serde_json::Value) -> bool| -> Vec<u32> {
            d.iter()
                .filter(|(_, ds)| ds.iter().any(pred))
                .map(|(r, _)| *r)
                .collect()
        };
        let engaged = robots_where(&|d| d["controller"]["safe"] == "collision");
        let waiting = robots_where(&|d| {
            d["controller"]["safe"] == "collision" && d["command"]["cmd"] == "wait"
        });
        assert_eq!(engaged.len(), 1, "seed {seed}: engaged {engaged:?}");
        assert!(waiting.len() <= 1, "seed {seed}: waiting {waiting:?}");
        waits += waiting.len();
        assert!(
            !d[&1].iter().any(yielded),
            "seed {seed}: robot 1 never yields"
        );
        yields += d[&2].iter().any(yielded) as usize;
        let finals: Vec<_> = out
            .metrics
            .robots
            .values()
            .map(|r| r.final_position)
            .collect();
        assert!(
            finals.contains(&Some(target)),
            "seed {seed}: nobody delivered"
        );
    }
    assert!(
        yields > 0 && waits > 0,
        "no seed had both robots moving into the conflict"
    );
}

#[test]
fn zero_destination_budget_is_immediately_quiescent() {
    let mut cfg = config("delivery");
    cfg.destinations = Destinations::Random { count: 0 };
    let out = run_scenario(&cfg).unwrap();
    assert!(!out.truncated);
    assert_eq!(out.metrics.total_violations(), 0);
    assert_eq!(out.metrics.ticks, 0);
    assert_eq!(
        out.metrics.tasks_completed + out.metrics.tasks_aborted + out.metrics.tasks_skipped,
        0
    );
    assert!(!out.trace.iter().any(|r| r.event_kind == "PlanReady"));
}

#[test]
fn each_delivery_monitor_is_necessary_somewhere() {
    let base = config("delivery");
    for (monitor, kind) in [
        ("collision", ViolationKind::RobotCollision),
        ("geofence", ViolationKind::GeofenceExit),
        ("battery", ViolationKind::BatteryDead),
    ] {
        let mut cfg = base.clone();
        cfg.monitors.retain(|m| m.id != monitor);
        let hit = (0..40).any(|seed| {
            cfg.seed = seed;
            run_scenario(&cfg).unwrap().metrics.violations_of(kind) > 0
        });
        assert!(hit, "disabling {monitor} never produced {}", kind.as_str());
    }
}

#[test]
fn metrics_round_trip_and_recompute() {
    let out = run_scenario(&config("delivery")).unwrap();
    let json = serde_json::to_string(&out.metrics).unwrap();
    let back: Metrics = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.metrics);
    assert_eq!(back.scenario, ScenarioKind::Delivery);
    let again = Metrics::from_trace(
        &config("delivery"),
        &out.trace,
        out.metrics.steps,
        out.truncated,
    );
    assert_eq!(again, out.metrics);
}

#[test]
fn validation_rejects_bad_configs() {
    let mut wrong_order = config("delivery");
    wrong_order.monitors.swap(0, 2);
    assert!(matches!(
        wrong_order.validate(),
        Err(ConfigError::Invalid(_))
    ));

    let mut two_drones = config("surveillance");
    two_drones.robots.push(two_drones.robots[0].clone());
    assert!(two_drones.validate().is_err());

    let mut outside = config("surveillance");
    outside.destinations = Destinations::Fixed(BTreeMap::from([(1, vec![Cell::new(9, 0)])]));
    assert!(outside.validate().is_err());

    let mut unknown = config("surveillance");
    unknown.monitors[0].id = "sonar".into();
    assert!(matches!(unknown.validate(), Err(ConfigError::Monitor(_))));

    let zero_delta = config("surveillance").with_delta(0);
    assert!(zero_delta.validate().is_err());

    let mut no_budget = config("surveillance");
    no_budget.step_budget = 0;
    assert!(no_budget.validate().is_err());
}

#[test]
fn step_budget_truncates() {
    let mut cfg = config("delivery");
    cfg.step_budget = 50;
    let out = run_scenario(&cfg).unwrap();
    assert!(out.truncated);
    assert!(out.metrics.truncated);
    assert_eq!(out.metrics.steps, 50);
    check_protocol(&out.trace, true).unwrap();
}
