use crate::geometry::Point2;
use crate::grid::{GridError, OccupancyGrid};

/// Cells a straight segment passes through, in visiting order, from the cell
/// containing `from` to the cell containing `to` (both included).
///
/// This is a grid DDA with the step count fixed in advance to the Manhattan
/// distance between the end cells, so the walk always terminates exactly on the
/// end cell even when rounding puts a crossing on the wrong side of a corner.
/// Cell coordinates are signed; callers decide what to do off the grid.
#[derive(Debug, Clone)]
pub struct CellWalk {
    col: i64,
    row: i64,
    end_col: i64,
    end_row: i64,
    step_col: i64,
    step_row: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    remaining: usize,
    started: bool,
}

impl CellWalk {
    pub fn new(grid: &OccupancyGrid, from: Point2, to: Point2) -> Self {
        let res = grid.resolution();
        let o = grid.origin();
        let (col, row) = grid.world_to_cell_signed(from);
        let (end_col, end_row) = grid.world_to_cell_signed(to);
        let dx = to.x - from.x;
        let dy = to.y - from.y;
        let step_col = (end_col - col).signum();
        let step_row = (end_row - row).signum();
        let (t_max_x, t_delta_x) = if step_col > 0 {
            ((o.x + (col + 1) as f64 * res - from.x) / dx, res / dx.abs())
        } else if step_col < 0 {
            ((o.x + col as f64 * res - from.x) / dx, res / dx.abs())
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let (t_max_y, t_delta_y) = if step_row > 0 {
            ((o.y + (row + 1) as f64 * res - from.y) / dy, res / dy.abs())
        } else if step_row < 0 {
            ((o.y + row as f64 * res - from.y) / dy, res / dy.abs())
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let remaining = ((end_col - col).abs() + (end_row - row).abs()) as usize;
        Self {
            col,
            row,
            end_col,
            end_row,
            step_col,
            step_row,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            remaining,
            started: false,
        }
    }

    /// Total number of cells the walk yields, including both ends.
    pub fn len(&self) -> usize {
        self.remaining + usize::from(!self.started)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Iterator for CellWalk {
    type Item = (i64, i64);

    fn next(&mut self) -> Option<(i64, i64)> {
        if !self.started {
            self.started = true;
            return Some((self.col, self.row));
        }
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let step_x = if self.col == self.end_col {
            false
        } else if self.row == self.end_row {
            true
        } else {
            self.t_max_x <= self.t_max_y
        };
        if step_x {
            self.col += self.step_col;
            self.t_max_x += self.t_delta_x;
        } else {
            self.row += self.step_row;
            self.t_max_y += self.t_delta_y;
        }
        Some((self.col, self.row))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.len(), Some(self.len()))
    }
}

impl ExactSizeIterator for CellWalk {}

/// Distance along a ray to the first cell whose occupancy probability exceeds
/// `occ_threshold`, measured to the point where the ray enters that cell.
/// `None` when the ray leaves the grid or `max_range` first.
pub fn raycast_grid(
    grid: &OccupancyGrid,
    origin: Point2,
    angle: f64,
    max_range: f64,
    occ_threshold: f64,
) -> Result<Option<f64>, GridError> {
    let Some(start) = grid.world_to_cell(origin) else {
        return Err(GridError::OutsideGrid {
            x: origin.x,
            y: origin.y,
        });
    };
    if grid.prob(start) > occ_threshold {
        return Ok(Some(0.0));
    }
    let res = grid.resolution();
    let o = grid.origin();
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut col, mut row) = (start.col as i64, start.row as i64);
    let step_col = if dx > 0.0 { 1 } else if dx < 0.0 { -1 } else { 0 };
    let step_row = if dy > 0.0 { 1 } else if dy < 0.0 { -1 } else { 0 };
    let boundary = |c: i64, step: i64, origin: f64, p: f64, d: f64| -> (f64, f64) {
        match step {
            1 => ((origin + (c + 1) as f64 * res - p) / d, res / d.abs()),
            -1 => ((origin + c as f64 * res - p) / d, res / d.abs()),
            _ => (f64::INFINITY, f64::INFINITY),
        }
    };
    let (mut t_max_x, t_delta_x) = boundary(col, step_col, o.x, origin.x, dx);
    let (mut t_max_y, t_delta_y) = boundary(row, step_row, o.y, origin.y, dy);
    loop {
        let t = if t_max_x <= t_max_y {
            col += step_col;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            row += step_row;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t > max_range {
            return Ok(None);
        }
        let Some(cell) = grid.cell_from_signed(col, row) else {
            return Ok(None);
        };
        if grid.prob(cell) > occ_threshold {
            return Ok(Some(t.max(0.0)));
        }
    }
}
