use proptest::prelude::*;
use rta::monitors::{self, trajectories_conflict, DangerSet, BATTERY, GEOFENCE, WALL};
use rta::planner::{plan_path, Knowledge};
use rta::rta::{RtaModule, WaypointFollower};
use rta::world::{step_world, Command, RobotPhys, ViolationKind, Workspace, WorldState};
use rta::Cell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

const DIRS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn bfs(ws: &Workspace, from: Cell, to: Cell) -> Option<usize> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([(from, 0)]);
    while let Some((c, d)) = queue.pop_front() {
        if c == to {
            return Some(d);
        }
        for (dx, dy) in DIRS {
            let n = Cell::new(c.x + dx, c.y + dy);
            if ws.is_free(n) && seen.insert(n) {
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

/// A walk of 4-neighbour steps from `start`, clamped to the grid.
fn walk(start: Cell, dirs: &[usize], size: i32) -> Vec<Cell> {
    let mut cur = start;
    let mut out = Vec::new();
    for &d in dirs {
        let (dx, dy) = DIRS[d % 4];
        let next = Cell::new(cur.x + dx, cur.y + dy);
        if next.x >= 0 && next.y >= 0 && next.x < size && next.y < size {
            out.push(next);
            cur = next;
        }
    }
    out
}

fn robot(id: u32, pos: Cell, battery: f64, drain: f64) -> RobotPhys {
    RobotPhys {
        id,
        pos,
        battery,
        battery_capacity: battery.max(1.0),
        drain_per_move: drain,
        dead: false,
    }
}

fn cell(size: i32) -> impl Strategy<Value = Cell> {
    (0..size, 0..size).prop_map(|(x, y)| Cell::new(x, y))
}

proptest! {
    #[test]
    fn planner_matches_bfs(obstacles in prop::collection::btree_set(cell(7), 0..6), start in cell(7), goal in cell(7)) {
        let mut ws = Workspace::open(7, 7);
        ws.obstacles = obstacles;
        prop_assume!(ws.is_free(start) && ws.is_free(goal));
        let got = plan_path(&Knowledge::static_obstacles(&ws), start, goal);
        match bfs(&ws, start, goal) {
            None => prop_assert!(got.is_err()),
            Some(d) => {
                let plan = got.unwrap();
                prop_assert_eq!(plan.len(), d);
                let mut prev = start;
                for c in &plan.waypoints {
                    prop_assert!(prev.is_adjacent(*c) && ws.is_free(*c));
                    prev = *c;
                }
                prop_assert_eq!(prev, goal);
            }
        }
    }

    #[test]
    fn conflict_is_symmetric(
        a in cell(5), b in cell(5),
        da in prop::collection::vec(0usize..4, 0..4),
        db in prop::collection::vec(0usize..4, 0..4),
        k in 1usize..4,
    ) {
        let (pa, pb) = (walk(a, &da, 5), walk(b, &db, 5));
        prop_assert_eq!(
            trajectories_conflict(a, &pa, b, &pb, k),
            trajectories_conflict(b, &pb, a, &pa, k)
        );
    }

    #[test]
    fn static_monitors_are_monotone_in_delta(
        start in cell(5),
        dirs in prop::collection::vec(0usize..4, 0..6),
        battery in 0u32..12,
        fence_lo in 0i32..2,
    ) {
        let mut ws = Workspace::open(5, 5);
        ws.obstacles = BTreeSet::from([Cell::new(2, 2)]);
        ws.danger_margin = 1;
        ws.geofence = ws.cells().filter(|c| c.x >= fence_lo && c.y >= fence_lo).collect();
        ws.chargers = BTreeMap::from([(1, Cell::new(4, 4))]);
        prop_assume!(ws.is_free(start));
        let world = WorldState::new(Arc::new(ws.clone()), [robot(1, start, battery as f64, 1.0)]).unwrap();
        let view = world.view(1, &BTreeMap::new());
        let path = walk(start, &dirs, 5);
        for id in [WALL, GEOFENCE, BATTERY] {
            let mut was_unsafe = false;
            for delta in 1..=6 {
                let unsafe_now = !monitors::build(id, delta, &ws).unwrap().check(&view, &path).is_safe();
                prop_assert!(!was_unsafe || unsafe_now, "{} unsafe at a smaller delta only", id);
                was_unsafe = unsafe_now;
            }
        }
    }

    #[test]
    fn physics_keeps_robots_in_bounds(
        moves in prop::collection::vec((0usize..5, 0usize..5), 0..30),
    ) {
        let mut ws = Workspace::walled(6, 6, 1);
        ws.obstacles = BTreeSet::from([Cell::new(3, 3)]);
        let mut state = WorldState::new(
            Arc::new(ws),
            [robot(1, Cell::new(1, 1), 8.0, 1.0), robot(2, Cell::new(4, 4), 8.0, 0.5)],
        ).unwrap();
        for (m1, m2) in moves {
            let cmd = |id: u32, m: usize| {
                let pos = state.robots[&id].pos;
                match m {
                    4 => Command::Wait,
                    d => Command::MoveTo(Cell::new(pos.x + DIRS[d].0, pos.y + DIRS[d].1)),
                }
            };
            let cmds = [(1, cmd(1, m1)), (2, cmd(2, m2))];
            let (next, violations) = step_world(&state, &cmds).unwrap();
            for r in next.robots.values() {
                prop_assert!(next.workspace.is_free(r.pos));
                prop_assert!(r.battery >= 0.0 && r.battery <= r.battery_capacity);
            }
            for v in violations {
                if v.kind == ViolationKind::WallStrike {
                    prop_assert_eq!(next.robots[&v.robot].pos, state.robots[&v.robot].pos);
                }
            }
            state = next;
        }
    }

    /// Closed loop of the wall monitor with the executor's plan handling:
    /// starting clear of the margin, the robot never enters it.
    #[test]
    fn wall_rta_never_enters_the_margin(
        start in (2i32..5, 2i32..5),
        dirs in prop::collection::vec(0usize..4, 1..14),
        delta in 1usize..4,
    ) {
        let ws = Arc::new(Workspace::walled(7, 7, 1));
        let danger = DangerSet::new(&ws);
        let start = Cell::new(start.0, start.1);
        let mut plan = walk(start, &dirs, 7);
        let mut state = WorldState::new(Arc::clone(&ws), [robot(1, start, 100.0, 0.0)]).unwrap();
        let mut rta = RtaModule::new(
            vec![monitors::build(WALL, delta, &ws).unwrap()],
            Box::new(WaypointFollower),
        ).unwrap();
        for _ in 0..200 {
            let view = state.view(1, &BTreeMap::new());
            let d = rta.act(&view, &plan);
            if let Some(p) = d.replace_plan {
                plan = p;
            }
            if d.advance && !plan.is_empty() {
                plan.remove(0);
            }
            match d.command {
                None | Some(Command::PlanAbort) => {
                    if !d.busy { break; }
                }
                Some(cmd) => {
                    let (next, violations) = step_world(&state, &[(1, cmd)]).unwrap();
                    prop_assert!(violations.is_empty());
                    state = next;
                }
            }
            prop_assert!(!danger.contains(state.robots[&1].pos), "entered {}", state.robots[&1].pos);
        }
    }
}
