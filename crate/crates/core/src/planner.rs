//! Grid motion planner.
//!
//! Shortest 4-connected paths over whatever the caller knows about the
//! workspace. Ties are broken by neighbour order `+x, -x, +y, -y`, so the
//! same inputs always yield the same waypoints.

use crate::geometry::Cell;
use crate::world::Workspace;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path from {start} to {goal}")]
    NoPath { start: Cell, goal: Cell },
    #[error("{0} is outside the grid")]
    OutOfGrid(Cell),
}

/// A planner's picture of the workspace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Knowledge {
    pub width: i32,
    pub height: i32,
    pub blocked: BTreeSet<Cell>,
    /// When set, only these cells may be traversed.
    pub allowed: Option<BTreeSet<Cell>>,
}

impl Knowledge {
    /// Knows the grid bounds and nothing else.
    pub fn bounds_only(width: i32, height: i32) -> Self {
        Self {
            width,
            height,
            blocked: BTreeSet::new(),
            allowed: None,
        }
    }

    /// Walls and static obstacles, but no fence.
    pub fn static_obstacles(ws: &Workspace) -> Self {
        Self {
            width: ws.width,
            height: ws.height,
            blocked: ws.walls.union(&ws.obstacles).copied().collect(),
            allowed: None,
        }
    }

    /// Full geometry: walls, obstacles and the fence. Used by safe controllers.
    pub fn certified(ws: &Workspace) -> Self {
        Self {
            allowed: Some(ws.geofence.clone()),
            ..Self::static_obstacles(ws)
        }
    }

    pub fn with_blocked(mut self, cells: impl IntoIterator<Item = Cell>) -> Self {
        self.blocked.extend(cells);
        self
    }

    pub fn in_grid(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn passable(&self, c: Cell) -> bool {
        self.in_grid(c)
            && !self.blocked.contains(&c)
            && self.allowed.as_ref().is_none_or(|a| a.contains(&c))
    }

    fn index(&self, c: Cell) -> usize {
        (c.y * self.width + c.x) as usize
    }

    /// BFS hop counts to `goal` over passable cells (`None` = unreachable).
    pub fn distances_to(&self, goal: Cell) -> DistanceField {
        let mut dist = vec![u32::MAX; (self.width * self.height).max(0) as usize];
        let mut queue = VecDeque::new();
        if self.passable(goal) {
            dist[self.index(goal)] = 0;
            queue.push_back(goal);
        }
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)];
            for n in c.neighbors() {
                if self.passable(n) && dist[self.index(n)] == u32::MAX {
                    dist[self.index(n)] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        DistanceField {
            width: self.width,
            height: self.height,
            dist,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistanceField {
    width: i32,
    height: i32,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn get(&self, c: Cell) -> Option<u32> {
        if c.x < 0 || c.y < 0 || c.x >= self.width || c.y >= self.height {
            return None;
        }
        let d = self.dist[(c.y * self.width + c.x) as usize];
        (d != u32::MAX).then_some(d)
    }
}

/// Ordered waypoints to a destination, excluding the start cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub waypoints: Vec<Cell>,
    pub destination: Cell,
    pub cursor: usize,
}

impl Plan {
    pub fn new(waypoints: Vec<Cell>, destination: Cell) -> Self {
        Self {
            waypoints,
            destination,
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> &[Cell] {
        &self.waypoints[self.cursor.min(self.waypoints.len())..]
    }

    pub fn advance(&mut self) {
        self.cursor = (self.cursor + 1).min(self.waypoints.len());
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.waypoints.len()
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

pub fn plan_path(knowledge: &Knowledge, start: Cell, goal: Cell) -> Result<Plan, PlanError> {
    for c in [start, goal] {
        if !knowledge.in_grid(c) {
            return Err(PlanError::OutOfGrid(c));
        }
    }
    if start == goal {
        return Ok(Plan::new(Vec::new(), goal));
    }
    let field = knowledge.distances_to(goal);
    let no_path = PlanError::NoPath { start, goal };
    // The start cell itself may sit outside the known-free set (a robot can
    // be standing where the planner believes nobody should be).
    let start_dist = match field.get(start) {
        Some(d) if knowledge.passable(start) => d,
        _ => {
            start
                .neighbors()
                .iter()
                .filter(|n| knowledge.passable(**n))
                .filter_map(|n| field.get(*n))
                .min()
                .ok_or(no_path.clone())?
                + 1
        }
    };
    let mut waypoints = Vec::with_capacity(start_dist as usize);
    let mut cur = start;
    let mut d = start_dist;
    while cur != goal {
        let next = cur
            .neighbors()
            .into_iter()
            .find(|n| knowledge.passable(*n) && field.get(*n) == Some(d - 1))
            .ok_or(no_path.clone())?;
        waypoints.push(next);
        cur = next;
        d -= 1;
    }
    Ok(Plan::new(waypoints, goal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::is_connected_walk;

    /// Independent reachability oracle: flood fill by repeated relaxation.
    fn reachable(k: &Knowledge, a: Cell, b: Cell) -> bool {
        let mut seen = BTreeSet::from([a]);
        loop {
            let grow: Vec<Cell> = seen
                .iter()
                .flat_map(|c| c.neighbors())
                .filter(|n| k.passable(*n) && !seen.contains(n))
                .collect();
            if grow.is_empty() {
                return seen.contains(&b);
            }
            seen.extend(grow);
        }
    }

    #[test]
    fn start_equals_goal_is_empty() {
        let k = Knowledge::bounds_only(5, 5);
        let p = plan_path(&k, Cell::new(2, 2), Cell::new(2, 2)).unwrap();
        assert!(p.is_empty());
        assert!(p.is_done());
    }

    #[test]
    fn corner_to_corner_is_manhattan() {
        let k = Knowledge::bounds_only(5, 5);
        let p = plan_path(&k, Cell::new(0, 0), Cell::new(4, 4)).unwrap();
        assert_eq!(p.len(), 8);
        assert!(is_connected_walk(Cell::new(0, 0), &p.waypoints));
        assert_eq!(*p.waypoints.last().unwrap(), Cell::new(4, 4));
        // +x preferred first
        assert_eq!(p.waypoints[0], Cell::new(1, 0));
    }

    #[test]
    fn splitting_wall_gives_no_path() {
        let k = Knowledge::bounds_only(5, 5).with_blocked((0..5).map(|y| Cell::new(2, y)));
        let (a, b) = (Cell::new(0, 0), Cell::new(4, 4));
        assert!(!reachable(&k, a, b));
        assert_eq!(
            plan_path(&k, a, b),
            Err(PlanError::NoPath { start: a, goal: b })
        );
    }

    #[test]
    fn blocked_goal_and_out_of_grid() {
        let k = Knowledge::bounds_only(5, 5).with_blocked([Cell::new(3, 3)]);
        assert!(plan_path(&k, Cell::new(0, 0), Cell::new(3, 3)).is_err());
        assert_eq!(
            plan_path(&k, Cell::new(0, 0), Cell::new(5, 0)),
            Err(PlanError::OutOfGrid(Cell::new(5, 0)))
        );
    }

    #[test]
    fn start_outside_allowed_region_still_plans() {
        let mut ws = Workspace::open(5, 5);
        ws.geofence = ws.cells().filter(|c| c.x >= 1).collect();
        let k = Knowledge::certified(&ws);
        let p = plan_path(&k, Cell::new(0, 2), Cell::new(3, 2)).unwrap();
        assert_eq!(
            p.waypoints,
            vec![Cell::new(1, 2), Cell::new(2, 2), Cell::new(3, 2)]
        );
    }

    #[test]
    fn plan_cursor() {
        let mut p = Plan::new(vec![Cell::new(1, 0), Cell::new(2, 0)], Cell::new(2, 0));
        assert_eq!(p.remaining().len(), 2);
        p.advance();
        assert_eq!(p.remaining(), &[Cell::new(2, 0)]);
        p.advance();
        p.advance();
        assert!(p.is_done());
    }
}
