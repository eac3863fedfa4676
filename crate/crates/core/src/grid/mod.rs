//! Log-odds occupancy grids.
//!
//! Cell (0, 0) has its outer corner at `origin`; columns grow along +x and rows
//! along +y. Grids are axis aligned.

mod field;
mod pgm;
mod raster;
mod traverse;

pub use field::{build_likelihood_field, LikelihoodField};
pub use pgm::{decode_pgm, encode_pgm, load_map, map_metadata, save_map, MapFiles};
pub use raster::rasterize_world;
pub use traverse::{raycast_grid, CellWalk};

use thiserror::Error;

use crate::geometry::{Point2, Pose2};
use crate::sim::LidarScan;

/// Log-odds increment for a cell a beam passes through.
pub const L_FREE: f64 = -0.405_465_108_108_164_4; // ln(0.4 / 0.6)
/// Log-odds increment for the cell a beam ends in.
pub const L_OCC: f64 = 0.847_297_860_387_203_6; // ln(0.7 / 0.3)
pub const L_CLAMP: f64 = 8.0;
/// Cells above this probability count as occupied.
pub const OCCUPIED_THRESH: f64 = 0.65;
/// Cells below this probability count as free.
pub const FREE_THRESH: f64 = 0.196;

pub fn logodds_to_prob(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

pub fn prob_to_logodds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("pose ({x:.3}, {y:.3}) lies outside the grid")]
    OutsideGrid { x: f64, y: f64 },
    #[error("malformed map file: {0}")]
    Malformed(String),
    #[error("map dimensions do not match: expected {expected} pixels, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unexpected pixel value {value} at byte {offset}")]
    UnknownPixel { value: u8, offset: usize },
    #[error("grids differ in resolution ({0} vs {1})")]
    ResolutionMismatch(f64, f64),
    #[error("grids do not overlap")]
    Disjoint,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// Three-way classification used by map files, planning and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Occupied,
    Free,
    Unknown,
}

impl CellClass {
    pub fn of_logodds(l: f64) -> Self {
        let p = logodds_to_prob(l);
        if p > OCCUPIED_THRESH {
            CellClass::Occupied
        } else if p < FREE_THRESH {
            CellClass::Free
        } else {
            CellClass::Unknown
        }
    }

    /// Canonical log-odds of the class, as reconstructed from map files.
    pub fn logodds(self) -> f64 {
        match self {
            CellClass::Occupied => L_CLAMP,
            CellClass::Free => -L_CLAMP,
            CellClass::Unknown => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Point2,
    cells: Vec<f64>,
}

impl OccupancyGrid {
    /// An all-unknown grid.
    pub fn new(resolution: f64, width: usize, height: usize, origin: Point2) -> Self {
        assert!(resolution > 0.0, "grid resolution must be positive");
        Self {
            resolution,
            width,
            height,
            origin,
            cells: vec![0.0; width * height],
        }
    }

    /// A grid of `size_x` × `size_y` meters whose lattice is aligned to integer
    /// multiples of `resolution` and which covers the rectangle centered on `center`.
    pub fn centered(resolution: f64, size_x: f64, size_y: f64, center: Point2) -> Self {
        let ox = ((center.x - size_x / 2.0) / resolution).floor() * resolution;
        let oy = ((center.y - size_y / 2.0) / resolution).floor() * resolution;
        let w = (size_x / resolution).ceil() as usize + 1;
        let h = (size_y / resolution).ceil() as usize + 1;
        Self::new(resolution, w, h, Point2::new(ox, oy))
    }

    pub fn from_cells(
        resolution: f64,
        width: usize,
        height: usize,
        origin: Point2,
        cells: Vec<f64>,
    ) -> Self {
        assert_eq!(cells.len(), width * height);
        let mut g = Self::new(resolution, width, height, origin);
        g.cells = cells.into_iter().map(|l| l.clamp(-L_CLAMP, L_CLAMP)).collect();
        g
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn origin_pose(&self) -> Pose2 {
        Pose2::new(self.origin.x, self.origin.y, 0.0)
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn same_geometry(&self, other: &OccupancyGrid) -> bool {
        self.resolution == other.resolution
            && self.width == other.width
            && self.height == other.height
            && self.origin == other.origin
    }

    /// Metric extent as (xmin, ymin, xmax, ymax).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width as f64 * self.resolution,
            self.origin.y + self.height as f64 * self.resolution,
        )
    }

    /// Floor of the metric offset in cells, without bounds checking.
    pub fn world_to_cell_signed(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_from_signed(&self, col: i64, row: i64) -> Option<Cell> {
        if col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height {
            Some(Cell::new(col as usize, row as usize))
        } else {
            None
        }
    }

    /// Cell containing `p`, or `None` outside the grid. Never clamps.
    pub fn world_to_cell(&self, p: Point2) -> Option<Cell> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return None;
        }
        let (c, r) = self.world_to_cell_signed(p);
        self.cell_from_signed(c, r)
    }

    pub fn cell_center(&self, cell: Cell) -> Point2 {
        Point2::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn logodds(&self, cell: Cell) -> f64 {
        self.cells[self.index(cell)]
    }

    pub fn prob(&self, cell: Cell) -> f64 {
        logodds_to_prob(self.logodds(cell))
    }

    pub fn class(&self, cell: Cell) -> CellClass {
        CellClass::of_logodds(self.logodds(cell))
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.class(cell) == CellClass::Occupied
    }

    pub fn set_logodds(&mut self, cell: Cell, l: f64) {
        let i = self.index(cell);
        self.cells[i] = l.clamp(-L_CLAMP, L_CLAMP);
    }

    pub fn add_logodds(&mut self, cell: Cell, dl: f64) {
        let i = self.index(cell);
        self.cells[i] = (self.cells[i] + dl).clamp(-L_CLAMP, L_CLAMP);
    }

    pub fn classes(&self) -> impl Iterator<Item = CellClass> + '_ {
        self.cells.iter().map(|&l| CellClass::of_logodds(l))
    }

    /// Fuses one scan taken at `pose` with the inverse sensor model: every cell a
    /// beam crosses strictly between the sensor cell and its end cell gets
    /// [`L_FREE`]; the end cell of a returning beam gets [`L_OCC`]. Beams without
    /// a return clear cells out to `range_max`.
    pub fn integrate_scan(&mut self, pose: &Pose2, scan: &LidarScan) -> Result<(), GridError> {
        self.integrate_scan_tracked(pose, scan).map(|_| ())
    }

    /// [`integrate_scan`](Self::integrate_scan), also returning the bounding box
    /// of cells that entered or left the occupied class.
    pub fn integrate_scan_tracked(&mut self, pose: &Pose2, scan: &LidarScan) -> Result<Option<CellRect>, GridError> {
        let origin = pose.position();
        if self.world_to_cell(origin).is_none() {
            return Err(GridError::OutsideGrid {
                x: pose.x,
                y: pose.y,
            });
        }
        let mut flipped: Option<CellRect> = None;
        for (i, &range) in scan.ranges.iter().enumerate() {
            let hit = scan.is_return(range);
            let reach = if hit { range } else { scan.range_max };
            let angle = pose.theta() + scan.angle(i);
            let end = Point2::new(origin.x + reach * angle.cos(), origin.y + reach * angle.sin());
            let walk = CellWalk::new(self, origin, end);
            let steps = walk.len();
            for (k, (c, r)) in walk.enumerate() {
                if k == 0 {
                    continue;
                }
                let Some(cell) = self.cell_from_signed(c, r) else {
                    break;
                };
                let dl = if k + 1 == steps {
                    if !hit {
                        continue;
                    }
                    L_OCC
                } else {
                    L_FREE
                };
                let i = self.index(cell);
                let before = self.cells[i];
                let after = (before + dl).clamp(-L_CLAMP, L_CLAMP);
                self.cells[i] = after;
                if (CellClass::of_logodds(before) == CellClass::Occupied) != (CellClass::of_logodds(after) == CellClass::Occupied) {
                    flipped = Some(match flipped {
                        Some(b) => b.including(cell),
                        None => CellRect::single(cell),
                    });
                }
            }
        }
        Ok(flipped)
    }
}

/// Inclusive rectangle of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub col0: usize,
    pub row0: usize,
    pub col1: usize,
    pub row1: usize,
}

impl CellRect {
    pub fn single(c: Cell) -> Self {
        Self {
            col0: c.col,
            row0: c.row,
            col1: c.col,
            row1: c.row,
        }
    }

    pub fn including(self, c: Cell) -> Self {
        Self {
            col0: self.col0.min(c.col),
            row0: self.row0.min(c.row),
            col1: self.col1.max(c.col),
            row1: self.row1.max(c.row),
        }
    }

    /// Grown by `margin` cells on every side, clipped to a `width` x `height` grid.
    pub fn grown(self, margin: usize, width: usize, height: usize) -> Self {
        Self {
            col0: self.col0.saturating_sub(margin),
            row0: self.row0.saturating_sub(margin),
            col1: (self.col1 + margin).min(width - 1),
            row1: (self.row1 + margin).min(height - 1),
        }
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0 + 1
    }

    pub fn height(&self) -> usize {
        self.row1 - self.row0 + 1
    }
}

/// Free-function form of [`OccupancyGrid::world_to_cell`].
pub fn world_to_cell(grid: &OccupancyGrid, p: Point2) -> Option<Cell> {
    grid.world_to_cell(p)
}

/// Free-function form of [`OccupancyGrid::integrate_scan`].
pub fn integrate_scan(grid: &mut OccupancyGrid, pose: &Pose2, scan: &LidarScan) -> Result<(), GridError> {
    grid.integrate_scan(pose, scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_beam(range: f64) -> LidarScan {
        LidarScan {
            stamp: 0.0,
            angle_min: 0.0,
            angle_inc: 1.0,
            range_min: 0.05,
            range_max: 4.0,
            ranges: vec![range],
        }
    }

    #[test]
    fn sensor_model_constants() {
        assert_abs_diff_eq!(L_FREE, (0.4f64 / 0.6).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(L_OCC, (0.7f64 / 0.3).ln(), epsilon = 1e-15);
    }

    #[test]
    fn world_to_cell_examples() {
        let g = OccupancyGrid::new(0.05, 100, 100, Point2::new(0.0, 0.0));
        assert_eq!(g.world_to_cell(Point2::new(0.0, 0.0)), Some(Cell::new(0, 0)));
        assert_eq!(g.world_to_cell(Point2::new(0.12, 0.26)), Some(Cell::new(2, 5)));
        assert_eq!(g.world_to_cell(Point2::new(-0.01, 0.0)), None);
        assert_eq!(g.world_to_cell(Point2::new(5.0, 0.0)), None);
    }

    #[test]
    fn single_beam_trace() {
        // Sensor at the center of cell (20, 20); the 1 m beam ends in cell (40, 20),
        // crossing cells 21..=39 on the way.
        let mut g = OccupancyGrid::new(0.05, 64, 64, Point2::new(0.0, 0.0));
        let pose = Pose2::new(1.025, 1.025, 0.0);
        g.integrate_scan(&pose, &one_beam(1.0)).unwrap();
        for (i, &l) in g.cells().iter().enumerate() {
            let c = g.cell_at(i);
            let expected = if c.row == 20 && (21..=39).contains(&c.col) {
                L_FREE
            } else if c == Cell::new(40, 20) {
                L_OCC
            } else {
                0.0
            };
            assert_eq!(l, expected, "cell {c:?}");
        }
        let free = g.cells().iter().filter(|&&l| l == L_FREE).count();
        assert_eq!(free, 19);
    }

    #[test]
    fn integration_is_additive() {
        let mut g = OccupancyGrid::new(0.05, 64, 64, Point2::new(0.0, 0.0));
        let pose = Pose2::new(1.025, 1.025, 0.3);
        g.integrate_scan(&pose, &one_beam(1.0)).unwrap();
        let once = g.clone();
        g.integrate_scan(&pose, &one_beam(1.0)).unwrap();
        for (a, b) in once.cells().iter().zip(g.cells()) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_scan_is_noop_and_outside_pose_errors() {
        let mut g = OccupancyGrid::new(0.05, 10, 10, Point2::new(0.0, 0.0));
        let mut empty = one_beam(1.0);
        empty.ranges.clear();
        g.integrate_scan(&Pose2::new(0.2, 0.2, 0.0), &empty).unwrap();
        assert!(g.cells().iter().all(|&l| l == 0.0));
        assert!(matches!(
            g.integrate_scan(&Pose2::new(-1.0, 0.2, 0.0), &one_beam(1.0)),
            Err(GridError::OutsideGrid { .. })
        ));
    }

    #[test]
    fn clamps_at_bounds() {
        let mut g = OccupancyGrid::new(0.05, 64, 64, Point2::new(0.0, 0.0));
        let pose = Pose2::new(1.025, 1.025, 0.0);
        for _ in 0..40 {
            g.integrate_scan(&pose, &one_beam(1.0)).unwrap();
        }
        assert_eq!(g.logodds(Cell::new(40, 20)), L_CLAMP);
        assert_eq!(g.logodds(Cell::new(30, 20)), -L_CLAMP);
    }

    #[test]
    fn centered_grid_is_lattice_aligned() {
        let g = OccupancyGrid::centered(0.05, 16.0, 16.0, Point2::new(0.425, 0.425));
        let o = g.origin();
        assert!((o.x / 0.05 - (o.x / 0.05).round()).abs() < 1e-9);
        assert!(g.world_to_cell(Point2::new(-7.5, 8.4)).is_some());
    }

    fn scan_strategy() -> impl Strategy<Value = (Pose2, LidarScan)> {
        (
            0.5..2.5f64,
            0.5..2.5f64,
            -3.0..3.0f64,
            prop::collection::vec(prop_oneof![0.05..2.0f64, Just(5.0)], 1..24),
        )
            .prop_map(|(x, y, th, ranges)| {
                let n = ranges.len() as f64;
                (
                    Pose2::new(x, y, th),
                    LidarScan {
                        stamp: 0.0,
                        angle_min: -3.1,
                        angle_inc: 6.2 / n,
                        range_min: 0.05,
                        range_max: 4.0,
                        ranges,
                    },
                )
            })
    }

    proptest! {
        #[test]
        fn prob_is_monotone_and_symmetric(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            prop_assert!((logodds_to_prob(a) + logodds_to_prob(-a) - 1.0).abs() <= 1e-12);
            if a < b { prop_assert!(logodds_to_prob(a) <= logodds_to_prob(b)); }
        }

        #[test]
        fn only_beam_paths_change((pose, scan) in scan_strategy()) {
            // Dense sampling along each beam collects every cell it can touch; cells
            // outside that set must be untouched.
            let mut g = OccupancyGrid::new(0.05, 60, 60, Point2::new(0.0, 0.0));
            let before = g.clone();
            g.integrate_scan(&pose, &scan).unwrap();
            let mut reachable = std::collections::HashSet::new();
            for (i, &r) in scan.ranges.iter().enumerate() {
                let reach = if scan.is_return(r) { r } else { scan.range_max };
                let a = pose.theta() + scan.angle(i);
                let n = (reach / 1e-3) as usize + 1;
                for k in 0..=n {
                    let t = reach * k as f64 / n as f64;
                    if let Some(c) = g.world_to_cell(Point2::new(pose.x + t * a.cos(), pose.y + t * a.sin())) {
                        for dc in -1i64..=1 { for dr in -1i64..=1 {
                            if let Some(nc) = g.cell_from_signed(c.col as i64 + dc, c.row as i64 + dr) {
                                reachable.insert(nc);
                            }
                        }}
                    }
                }
            }
            for i in 0..g.len() {
                if g.cells()[i] != before.cells()[i] {
                    prop_assert!(reachable.contains(&g.cell_at(i)));
                }
            }
        }
    }
}
