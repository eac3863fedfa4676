use crate::geometry::Point2;
use crate::grid::{Cell, CellClass, CellRect, OccupancyGrid};

/// Distance from every cell center to the nearest occupied cell center, capped
/// at `d_max`. Shares the geometry of its source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodField {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Point2,
    d_max: f64,
    dist: Vec<f64>,
}

impl LikelihoodField {
    pub fn d_max(&self) -> f64 {
        self.d_max
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

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn distance(&self, cell: Cell) -> f64 {
        self.dist[cell.row * self.width + cell.col]
    }

    /// Distance looked up in the cell containing `p`; `None` off the grid.
    #[inline]
    pub fn distance_at(&self, p: Point2) -> Option<f64> {
        let fx = (p.x - self.origin.x) / self.resolution;
        let fy = (p.y - self.origin.y) / self.resolution;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (c, r) = (fx as usize, fy as usize);
        if c < self.width && r < self.height {
            Some(self.dist[r * self.width + c])
        } else {
            None
        }
    }

    /// Distance bilinearly interpolated between the four surrounding cell
    /// centers; `None` unless all four lie on the grid.
    #[inline]
    pub fn interpolated_at(&self, p: Point2) -> Option<f64> {
        let fx = (p.x - self.origin.x) / self.resolution - 0.5;
        let fy = (p.y - self.origin.y) / self.resolution - 0.5;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (c, r) = (fx as usize, fy as usize);
        if c + 1 >= self.width || r + 1 >= self.height {
            return None;
        }
        let (tx, ty) = (fx - c as f64, fy - r as f64);
        let i = r * self.width + c;
        let d = &self.dist;
        let bottom = d[i] + tx * (d[i + 1] - d[i]);
        let top = d[i + self.width] + tx * (d[i + self.width + 1] - d[i + self.width]);
        Some(bottom + ty * (top - bottom))
    }
}

/// Exact Euclidean distance transform (two separable lower-envelope passes over
/// squared distances), then scaled to meters and capped.
pub fn build_likelihood_field(grid: &OccupancyGrid, d_max: f64) -> LikelihoodField {
    let (w, h) = (grid.width(), grid.height());
    let all = CellRect {
        col0: 0,
        row0: 0,
        col1: w - 1,
        row1: h - 1,
    };
    let res = grid.resolution();
    let dist = squared_transform(grid, all)
        .into_iter()
        .map(|d2| to_distance(d2, res, d_max))
        .collect();
    LikelihoodField {
        resolution: res,
        width: w,
        height: h,
        origin: grid.origin(),
        d_max,
        dist,
    }
}

impl LikelihoodField {
    /// Brings the field up to date with `grid` after the occupied class changed
    /// only inside `changed`. Capped distances depend on occupied cells at most
    /// `d_max` away, so the transform is rerun on a window two margins wider
    /// and its inner part copied back; the result equals a full rebuild.
    pub fn update(&mut self, grid: &OccupancyGrid, changed: CellRect) {
        debug_assert!(grid.width() == self.width && grid.height() == self.height);
        let margin = (self.d_max / self.resolution).ceil() as usize + 1;
        let inner = changed.grown(margin, self.width, self.height);
        let window = changed.grown(2 * margin, self.width, self.height);
        let sq = squared_transform(grid, window);
        let ww = window.width();
        for r in inner.row0..=inner.row1 {
            for c in inner.col0..=inner.col1 {
                let d2 = sq[(r - window.row0) * ww + (c - window.col0)];
                self.dist[r * self.width + c] = to_distance(d2, self.resolution, self.d_max);
            }
        }
    }
}

fn to_distance(d2: f64, res: f64, d_max: f64) -> f64 {
    if d2.is_finite() {
        (d2.sqrt() * res).min(d_max)
    } else {
        d_max
    }
}

/// Squared cell distances to the nearest occupied cell, considering only the
/// cells of `rect`; row-major over `rect`.
fn squared_transform(grid: &OccupancyGrid, rect: CellRect) -> Vec<f64> {
    let (w, h) = (rect.width(), rect.height());
    let mut sq = Vec::with_capacity(w * h);
    for r in rect.row0..=rect.row1 {
        for c in rect.col0..=rect.col1 {
            let occupied = CellClass::of_logodds(grid.logodds(Cell::new(c, r))) == CellClass::Occupied;
            sq.push(if occupied { 0.0 } else { f64::INFINITY });
        }
    }
    let mut buf = Scratch::new(w.max(h));
    // Columns first, then rows.
    let mut line = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            line[r] = sq[r * w + c];
        }
        buf.transform(&mut line);
        for r in 0..h {
            sq[r * w + c] = line[r];
        }
    }
    for r in 0..h {
        buf.transform(&mut sq[r * w..(r + 1) * w]);
    }
    sq
}

struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
            out: vec![0.0; n],
        }
    }

    /// 1-D squared distance transform of `f` in place (Felzenszwalb–Huttenlocher).
    fn transform(&mut self, f: &mut [f64]) {
        let n = f.len();
        let Some(first) = f.iter().position(|x| x.is_finite()) else {
            return;
        };
        let (v, z) = (&mut self.v, &mut self.z);
        let mut k = 0;
        v[0] = first;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in first + 1..n {
            if !f[q].is_finite() {
                continue;
            }
            let parabola_cut = |p: usize| {
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64)
            };
            let mut s = parabola_cut(v[k]);
            // z[0] is -inf, so this never pops the last parabola.
            while s <= z[k] {
                k -= 1;
                s = parabola_cut(v[k]);
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        let mut k = 0;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let d = q as f64 - v[k] as f64;
            self.out[q] = d * d + f[v[k]];
        }
        f.copy_from_slice(&self.out[..n]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::L_CLAMP;
    use proptest::prelude::*;

    fn brute(grid: &OccupancyGrid, d_max: f64) -> Vec<f64> {
        let occ: Vec<Cell> = (0..grid.len())
            .map(|i| grid.cell_at(i))
            .filter(|&c| grid.is_occupied(c))
            .collect();
        (0..grid.len())
            .map(|i| {
                let c = grid.cell_center(grid.cell_at(i));
                occ.iter()
                    .map(|&o| c.distance(&grid.cell_center(o)))
                    .fold(d_max, f64::min)
            })
            .collect()
    }

    #[test]
    fn empty_grid_is_all_cap() {
        let g = OccupancyGrid::new(0.05, 20, 10, Point2::new(0.0, 0.0));
        let f = build_likelihood_field(&g, 0.7);
        assert!(f.distances().iter().all(|&d| d == 0.7));
    }

    #[test]
    fn single_seed_is_euclidean() {
        let mut g = OccupancyGrid::new(0.1, 30, 30, Point2::new(-1.0, 2.0));
        g.set_logodds(Cell::new(7, 11), L_CLAMP);
        let f = build_likelihood_field(&g, 1.5);
        let seed = g.cell_center(Cell::new(7, 11));
        for i in 0..g.len() {
            let c = g.cell_at(i);
            let expected = g.cell_center(c).distance(&seed).min(1.5);
            assert!((f.distance(c) - expected).abs() < 1e-9);
        }
        assert_eq!(f.distance(Cell::new(7, 11)), 0.0);
        assert_eq!(f.distance_at(Point2::new(-2.0, 2.5)), None);
        assert!(f.interpolated_at(seed).unwrap().abs() < 1e-12);
    }

    #[test]
    fn interpolation_hits_centers_and_blends_between() {
        let cells = (0..16).map(|i| if i == 5 { L_CLAMP } else { 0.0 }).collect();
        let g = OccupancyGrid::from_cells(1.0, 4, 4, Point2::new(0.0, 0.0), cells);
        let f = build_likelihood_field(&g, 10.0);
        for i in 0..16 {
            let c = g.cell_at(i);
            let at = f.interpolated_at(g.cell_center(c));
            if c.col < 3 && c.row < 3 {
                assert!((at.unwrap() - f.distance(c)).abs() < 1e-12);
            }
        }
        // Halfway between (1, 1) at 0 and (2, 1) at 1.
        assert!((f.interpolated_at(Point2::new(2.0, 1.5)).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(f.interpolated_at(Point2::new(0.2, 0.2)), None);
        assert_eq!(f.interpolated_at(Point2::new(3.7, 1.0)), None);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            w in 1usize..=64, h in 1usize..=64, density in 0.0..0.2f64, seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cells = (0..w * h).map(|_| if rng.random::<f64>() < density { L_CLAMP } else { 0.0 }).collect();
            let g = OccupancyGrid::from_cells(0.05, w, h, Point2::new(0.3, -0.2), cells);
            let f = build_likelihood_field(&g, 0.8);
            for (a, b) in f.distances().iter().zip(brute(&g, 0.8)) {
                prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
            }
            // Neighbor differences are bounded by the cell diagonal.
            for r in 0..h { for c in 0..w {
                let d = f.distance(Cell::new(c, r));
                if c + 1 < w { prop_assert!((d - f.distance(Cell::new(c + 1, r))).abs() <= 0.05 * 2f64.sqrt() + 1e-9); }
                if r + 1 < h { prop_assert!((d - f.distance(Cell::new(c, r + 1))).abs() <= 0.05 * 2f64.sqrt() + 1e-9); }
            }}
        }

        #[test]
        fn windowed_update_equals_rebuild(
            w in 4usize..60, h in 4usize..60, density in 0.0..0.15f64, seed in any::<u64>(),
            flips in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..6),
            spread in 0usize..8,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cells = (0..w * h).map(|_| if rng.random::<f64>() < density { L_CLAMP } else { -L_CLAMP }).collect();
            let mut g = OccupancyGrid::from_cells(0.05, w, h, Point2::new(0.0, 0.0), cells);
            let mut f = build_likelihood_field(&g, 0.3);
            let anchor = Cell::new((flips[0].0 * w as f64) as usize, (flips[0].1 * h as f64) as usize);
            let mut rect = CellRect::single(anchor);
            for (fx, fy) in &flips {
                let c = (anchor.col + (fx * spread as f64) as usize).min(w - 1);
                let r = (anchor.row + (fy * spread as f64) as usize).min(h - 1);
                let cell = Cell::new(c, r);
                let l = if g.is_occupied(cell) { -L_CLAMP } else { L_CLAMP };
                g.set_logodds(cell, l);
                rect = rect.including(cell);
            }
            f.update(&g, rect);
            prop_assert_eq!(f, build_likelihood_field(&g, 0.3));
        }
    }
}
