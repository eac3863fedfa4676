use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use super::InflatedGrid;
use crate::geometry::{Point2, Pose2};
use crate::grid::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("start lies outside the map")]
    StartOutside,
    #[error("goal lies outside the map")]
    GoalOutside,
    #[error("start cell is blocked")]
    StartBlocked,
    #[error("goal cell is blocked")]
    GoalBlocked,
    #[error("no path to the goal")]
    NoPath,
}

/// Path cost in whole moves: `straight` axis steps plus `diagonal` steps.
/// Distinct counts never compare equal, so ordering is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StepCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCost {
    pub const ZERO: StepCost = StepCost {
        straight: 0,
        diagonal: 0,
    };

    /// Length in cells.
    pub fn value(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    pub fn add(self, o: StepCost) -> StepCost {
        StepCost {
            straight: self.straight + o.straight,
            diagonal: self.diagonal + o.diagonal,
        }
    }

    pub fn cmp_value(self, o: StepCost) -> Ordering {
        if self == o {
            Ordering::Equal
        } else {
            self.value().total_cmp(&o.value())
        }
    }
}

/// Octile distance between cells, the exact shortest-path length on an
/// obstacle-free 8-connected grid.
pub fn octile(a: Cell, b: Cell) -> StepCost {
    let dx = a.col.abs_diff(b.col) as u32;
    let dy = a.row.abs_diff(b.row) as u32;
    StepCost {
        straight: dx.max(dy) - dx.min(dy),
        diagonal: dx.min(dy),
    }
}

/// Grid path through cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub waypoints: Vec<Point2>,
    /// Meters.
    pub total_cost: f64,
    pub steps: StepCost,
}

impl Path {
    /// Sum of the Euclidean lengths between consecutive waypoints.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }
}

/// The eight moves with their cost; diagonals may not cut a blocked corner.
pub(crate) const MOVES: [(i64, i64, StepCost); 8] = [
    (1, 0, StepCost { straight: 1, diagonal: 0 }),
    (-1, 0, StepCost { straight: 1, diagonal: 0 }),
    (0, 1, StepCost { straight: 1, diagonal: 0 }),
    (0, -1, StepCost { straight: 1, diagonal: 0 }),
    (1, 1, StepCost { straight: 0, diagonal: 1 }),
    (1, -1, StepCost { straight: 0, diagonal: 1 }),
    (-1, 1, StepCost { straight: 0, diagonal: 1 }),
    (-1, -1, StepCost { straight: 0, diagonal: 1 }),
];

/// Free neighbours of `c` with the move cost.
pub(crate) fn neighbours(g: &InflatedGrid, c: Cell) -> impl Iterator<Item = (Cell, StepCost)> + '_ {
    MOVES.iter().filter_map(move |&(dc, dr, cost)| {
        let n = g.cell_from_signed(c.col as i64 + dc, c.row as i64 + dr)?;
        if g.is_blocked(n) {
            return None;
        }
        if dc != 0 && dr != 0 {
            let a = g.cell_from_signed(c.col as i64 + dc, c.row as i64)?;
            let b = g.cell_from_signed(c.col as i64, c.row as i64 + dr)?;
            if g.is_blocked(a) || g.is_blocked(b) {
                return None;
            }
        }
        Some((n, cost))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Open {
    f: StepCost,
    h: StepCost,
    index: usize,
}

impl Ord for Open {
    // Reversed: BinaryHeap pops the largest, we want the smallest
    // (f, then h, then row-major index).
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.cmp_value(self.f)
            .then_with(|| o.h.cmp_value(self.h))
            .then_with(|| o.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Minimum-cost 8-connected path from the cell containing `start` to the cell
/// containing `goal`.
pub fn plan_astar(g: &InflatedGrid, start: &Pose2, goal: Point2) -> Result<Path, PlanError> {
    let s = g.world_to_cell(start.position()).ok_or(PlanError::StartOutside)?;
    let t = g.world_to_cell(goal).ok_or(PlanError::GoalOutside)?;
    plan_cells(g, s, t)
}

pub fn plan_cells(g: &InflatedGrid, s: Cell, t: Cell) -> Result<Path, PlanError> {
    if g.is_blocked(s) {
        return Err(PlanError::StartBlocked);
    }
    if g.is_blocked(t) {
        return Err(PlanError::GoalBlocked);
    }
    let n = g.width() * g.height();
    let mut best: Vec<Option<StepCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = g.index(s);
    best[si] = Some(StepCost::ZERO);
    let h = octile(s, t);
    open.push(Open { f: h, h, index: si });
    while let Some(Open { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let c = g.cell_at(index);
        if c == t {
            return Ok(build_path(g, &parent, si, index, best[index].unwrap()));
        }
        let gc = best[index].unwrap();
        for (nb, step) in neighbours(g, c) {
            let ni = g.index(nb);
            if closed[ni] {
                continue;
            }
            let cand = gc.add(step);
            if best[ni].is_none_or(|b| cand.cmp_value(b) == Ordering::Less) {
                best[ni] = Some(cand);
                parent[ni] = index;
                let h = octile(nb, t);
                open.push(Open {
                    f: cand.add(h),
                    h,
                    index: ni,
                });
            }
        }
    }
    Err(PlanError::NoPath)
}

fn build_path(g: &InflatedGrid, parent: &[usize], start: usize, end: usize, steps: StepCost) -> Path {
    let mut idx = vec![end];
    while *idx.last().unwrap() != start {
        idx.push(parent[*idx.last().unwrap()]);
    }
    idx.reverse();
    let cells: Vec<Cell> = idx.into_iter().map(|i| g.cell_at(i)).collect();
    let waypoints = cells.iter().map(|&c| g.cell_center(c)).collect();
    Path {
        cells,
        waypoints,
        total_cost: steps.value() * g.resolution(),
        steps,
    }
}
