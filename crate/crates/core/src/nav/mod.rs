//! Grid navigation: obstacle inflation, A* planning and a pure-pursuit
//! controller driving a localized robot to a goal.

mod astar;
mod pursuit;

pub use astar::{octile, plan_astar, plan_cells, Path, PlanError, StepCost};
pub use pursuit::{pure_pursuit, PathTracker, PursuitConfig};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point2, Pose2, Twist2};
use crate::grid::{build_likelihood_field, Cell, CellClass, OccupancyGrid};
use crate::log::{Record, Stamped, Trajectory};
use crate::sim::Simulator;

/// Binary planning grid: a cell is blocked or free.
#[derive(Debug, Clone, PartialEq)]
pub struct InflatedGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Point2,
    blocked: Vec<bool>,
}

impl InflatedGrid {
    pub fn from_blocked(resolution: f64, width: usize, height: usize, origin: Point2, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), width * height);
        Self {
            resolution,
            width,
            height,
            origin,
            blocked,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.index(c)]
    }

    pub fn blocked(&self) -> &[bool] {
        &self.blocked
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, i: usize) -> Cell {
        Cell::new(i % self.width, i / self.width)
    }

    pub fn cell_from_signed(&self, col: i64, row: i64) -> Option<Cell> {
        if col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height {
            Some(Cell::new(col as usize, row as usize))
        } else {
            None
        }
    }

    pub fn world_to_cell(&self, p: Point2) -> Option<Cell> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return None;
        }
        let c = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let r = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        self.cell_from_signed(c, r)
    }

    pub fn cell_center(&self, c: Cell) -> Point2 {
        Point2::new(
            self.origin.x + (c.col as f64 + 0.5) * self.resolution,
            self.origin.y + (c.row as f64 + 0.5) * self.resolution,
        )
    }

    /// Nearest free cell to `c` by breadth-first search, within `max_cells` steps.
    pub fn nearest_free(&self, c: Cell, max_cells: usize) -> Option<Cell> {
        if !self.is_blocked(c) {
            return Some(c);
        }
        let mut seen = vec![false; self.blocked.len()];
        let mut queue = VecDeque::from([(c, 0usize)]);
        seen[self.index(c)] = true;
        while let Some((cur, d)) = queue.pop_front() {
            if !self.is_blocked(cur) {
                return Some(cur);
            }
            if d == max_cells {
                continue;
            }
            for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(n) = self.cell_from_signed(cur.col as i64 + dc, cur.row as i64 + dr) {
                    let i = self.index(n);
                    if !seen[i] {
                        seen[i] = true;
                        queue.push_back((n, d + 1));
                    }
                }
            }
        }
        None
    }
}

/// Blocks occupied and unknown cells and every cell whose center lies within
/// `radius` of an occupied cell center.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> InflatedGrid {
    assert!(radius >= 0.0, "inflation radius must be nonnegative");
    let field = build_likelihood_field(grid, radius + grid.resolution());
    let blocked = (0..grid.len())
        .map(|i| {
            let c = grid.cell_at(i);
            grid.class(c) != CellClass::Free || field.distance(c) <= radius + 1e-9
        })
        .collect();
    InflatedGrid::from_blocked(grid.resolution(), grid.width(), grid.height(), grid.origin(), blocked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavConfig {
    pub inflation_radius: f64,
    pub pursuit: PursuitConfig,
    pub goal_tolerance: f64,
    pub heading_tolerance: f64,
    /// Replan when the robot strays this far from the path, meters.
    pub replan_deviation: f64,
    /// Declare stuck after this long without `stuck_progress` meters of progress.
    pub stuck_time: f64,
    pub stuck_progress: f64,
    /// Hard limit on a single navigation, seconds.
    pub max_time: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            inflation_radius: 0.25,
            // Turning toward the path before driving keeps the first arc
            // inside 0.8 m corridors.
            pursuit: PursuitConfig {
                rotate_threshold: 0.8,
                ..PursuitConfig::default()
            },
            goal_tolerance: 0.10,
            heading_tolerance: 0.15,
            replan_deviation: 0.5,
            stuck_time: 10.0,
            stuck_progress: 0.05,
            max_time: 1200.0,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.inflation_radius >= 0.0 && self.goal_tolerance > 0.0 && self.heading_tolerance > 0.0) {
            return Err("navigation tolerances must be positive".into());
        }
        if !(self.replan_deviation > 0.0 && self.stuck_time > 0.0 && self.max_time > 0.0) {
            return Err("navigation timing limits must be positive".into());
        }
        self.pursuit.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub position: Point2,
    /// Optional final heading; without one only the position must be reached.
    pub heading: Option<f64>,
}

impl Goal {
    pub fn point(x: f64, y: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            heading: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavOutcome {
    Reached,
    NoPath,
    Stuck,
}

impl NavOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            NavOutcome::Reached => "reached",
            NavOutcome::NoPath => "no_path",
            NavOutcome::Stuck => "stuck",
        }
    }
}

/// A robot that can be commanded one control tick at a time.
pub trait NavSource {
    /// Localized pose.
    fn pose(&self) -> Pose2;
    fn time(&self) -> f64;
    /// Applies `cmd` for one tick.
    fn tick(&mut self, cmd: Twist2);
    /// A newer map, if one arrived since the last call.
    fn take_map_update(&mut self) -> Option<OccupancyGrid> {
        None
    }
}

/// Simulator with perfect localization; keeps every emitted record.
#[derive(Debug, Clone)]
pub struct SimNav {
    pub sim: Simulator,
    pub records: Vec<Record>,
}

impl SimNav {
    pub fn new(mut sim: Simulator) -> Self {
        let records = sim.initial_records();
        Self { sim, records }
    }
}

impl NavSource for SimNav {
    fn pose(&self) -> Pose2 {
        self.sim.state().true_pose
    }

    fn time(&self) -> f64 {
        self.sim.state().clock
    }

    fn tick(&mut self, cmd: Twist2) {
        let recs = self.sim.step(cmd);
        self.records.extend(recs);
    }
}

#[derive(Debug, Clone)]
pub struct NavReport {
    pub outcome: NavOutcome,
    pub trajectory: Trajectory,
    /// The first plan, if one was found.
    pub plan: Option<Path>,
    pub replans: usize,
    /// Distance driven, meters.
    pub traveled: f64,
}

fn plan_from(g: &InflatedGrid, pose: &Pose2, goal: &Goal, cfg: &NavConfig) -> Result<Path, PlanError> {
    let s = g.world_to_cell(pose.position()).ok_or(PlanError::StartOutside)?;
    let t = g.world_to_cell(goal.position).ok_or(PlanError::GoalOutside)?;
    // A robot that clipped the inflation margin plans from the nearest free cell.
    let reach = (cfg.replan_deviation / g.resolution()).ceil() as usize;
    let s = g.nearest_free(s, reach).unwrap_or(s);
    let mut path = plan_cells(g, s, t)?;
    *path.waypoints.last_mut().expect("paths are nonempty") = goal.position;
    Ok(path)
}

fn path_is_clear(g: &InflatedGrid, path: &Path, from: usize) -> bool {
    path.cells[from.min(path.cells.len() - 1)..].iter().all(|c| !g.is_blocked(*c))
}

/// What the controller wants for the next tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NavStep {
    Drive(Twist2),
    Done(NavOutcome),
}

/// Navigation as a state machine advanced once per control tick.
#[derive(Debug, Clone)]
pub struct Navigator {
    cfg: NavConfig,
    goal: Goal,
    inflated: InflatedGrid,
    /// None when the goal was satisfied at the start.
    path: Option<Path>,
    first: Option<Path>,
    tracker: Option<PathTracker>,
    replans: usize,
    t0: f64,
    best_remaining: f64,
    last_progress: f64,
}

impl Navigator {
    /// Plans from `pose` on `map`. An unreachable goal is `PlanError::NoPath`.
    pub fn start(map: &OccupancyGrid, goal: Goal, cfg: NavConfig, pose: Pose2, t: f64) -> Result<Self, PlanError> {
        let inflated = inflate(map, cfg.inflation_radius);
        let mut nav = Self {
            cfg,
            goal,
            inflated,
            path: None,
            first: None,
            tracker: None,
            replans: 0,
            t0: t,
            best_remaining: f64::INFINITY,
            last_progress: t,
        };
        if !nav.satisfied(&pose) {
            let path = plan_from(&nav.inflated, &pose, &goal, &cfg)?;
            nav.tracker = Some(PathTracker::new(path.waypoints.clone()));
            nav.first = Some(path.clone());
            nav.path = Some(path);
        }
        Ok(nav)
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_ref()
    }

    pub fn first_plan(&self) -> Option<&Path> {
        self.first.as_ref()
    }

    pub fn replans(&self) -> usize {
        self.replans
    }

    fn at_goal(&self, p: &Pose2) -> bool {
        p.position().distance(&self.goal.position) <= self.cfg.goal_tolerance
    }

    fn satisfied(&self, p: &Pose2) -> bool {
        self.at_goal(p)
            && self
                .goal
                .heading
                .is_none_or(|h| wrap_angle(h - p.theta()).abs() <= self.cfg.heading_tolerance)
    }

    /// Decides the command for the tick starting at time `t` with the robot at
    /// `pose`. `map_update` is a newer map, if one arrived.
    pub fn step(&mut self, pose: Pose2, t: f64, map_update: Option<&OccupancyGrid>) -> Result<NavStep, PlanError> {
        let cfg = self.cfg;
        if self.satisfied(&pose) {
            return Ok(NavStep::Done(NavOutcome::Reached));
        }
        if let (true, Some(h)) = (self.at_goal(&pose), self.goal.heading) {
            let err = wrap_angle(h - pose.theta());
            self.last_progress = t;
            return Ok(NavStep::Drive(Twist2::new(0.0, (2.0 * err).clamp(-cfg.pursuit.max_w, cfg.pursuit.max_w))));
        }
        if t - self.t0 > cfg.max_time {
            return Ok(NavStep::Done(NavOutcome::Stuck));
        }
        let (Some(path), Some(tracker)) = (self.path.as_mut(), self.tracker.as_mut()) else {
            return Ok(NavStep::Done(NavOutcome::Reached));
        };

        let remaining = tracker.remaining() + pose.position().distance(&tracker.points()[tracker.progress()]);
        if self.best_remaining - remaining >= cfg.stuck_progress {
            self.best_remaining = remaining;
            self.last_progress = t;
        } else if t - self.last_progress > cfg.stuck_time {
            return Ok(NavStep::Done(NavOutcome::Stuck));
        }

        let mut replan = tracker.cross_track(&pose) > cfg.replan_deviation;
        if let Some(m) = map_update {
            self.inflated = inflate(m, cfg.inflation_radius);
            replan |= !path_is_clear(&self.inflated, path, tracker.progress());
        }
        if replan {
            *path = match plan_from(&self.inflated, &pose, &self.goal, &cfg) {
                Ok(p) => p,
                Err(PlanError::NoPath) => return Ok(NavStep::Done(NavOutcome::NoPath)),
                Err(e) => return Err(e),
            };
            *tracker = PathTracker::new(path.waypoints.clone());
            self.replans += 1;
        }
        Ok(NavStep::Drive(tracker.command(&pose, &cfg.pursuit)))
    }
}

/// Drives `src` to `goal` on `map`. Planner errors other than an unreachable
/// goal are returned as errors.
pub fn navigate<S: NavSource + ?Sized>(
    src: &mut S,
    map: &OccupancyGrid,
    goal: Goal,
    cfg: &NavConfig,
) -> Result<NavReport, PlanError> {
    let mut trajectory = vec![Stamped {
        t: src.time(),
        pose: src.pose(),
    }];
    let report = |outcome, nav: Option<&Navigator>, trajectory: Trajectory| {
        let traveled = trajectory
            .windows(2)
            .map(|w| w[0].pose.position().distance(&w[1].pose.position()))
            .sum();
        Ok(NavReport {
            outcome,
            trajectory,
            plan: nav.and_then(|n| n.first_plan().cloned()),
            replans: nav.map_or(0, |n| n.replans()),
            traveled,
        })
    };
    let mut nav = match Navigator::start(map, goal, *cfg, src.pose(), src.time()) {
        Ok(n) => n,
        Err(PlanError::NoPath) => return report(NavOutcome::NoPath, None, trajectory),
        Err(e) => return Err(e),
    };
    loop {
        let update = src.take_map_update();
        match nav.step(src.pose(), src.time(), update.as_ref())? {
            NavStep::Drive(cmd) => {
                src.tick(cmd);
                trajectory.push(Stamped {
                    t: src.time(),
                    pose: src.pose(),
                });
            }
            NavStep::Done(outcome) => return report(outcome, Some(&nav), trajectory),
        }
    }
}
