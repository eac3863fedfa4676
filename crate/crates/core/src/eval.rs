//! Trajectory error and map-vs-truth metrics.

use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;
use crate::grid::{Cell, CellClass, OccupancyGrid};
use crate::log::Stamped;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no estimate has a ground-truth stamp within {max_dt} s")]
    EmptyOverlap { max_dt: f64 },
    #[error("{which} trajectory is not sorted by stamp (index {index})")]
    Unsorted { which: &'static str, index: usize },
    #[error("map resolutions differ: {a} vs {b}")]
    ResolutionMismatch { a: f64, b: f64 },
    #[error("map extents do not overlap")]
    DisjointExtents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub rmse_m: f64,
    pub mean_m: f64,
    pub max_m: f64,
    pub n_pairs: usize,
    /// Estimates with no truth stamp within `max_dt`.
    pub n_unpaired: usize,
}

/// One paired sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub t: f64,
    pub position: f64,
    /// Signed, wrapped to (-pi, pi].
    pub heading: f64,
}

fn check_sorted(traj: &[Stamped], which: &'static str) -> Result<(), EvalError> {
    match traj.windows(2).position(|w| !(w[1].t >= w[0].t)) {
        Some(i) => Err(EvalError::Unsorted { which, index: i + 1 }),
        None => Ok(()),
    }
}

/// Index of the truth sample nearest to `t`; the earlier one wins ties.
fn nearest(truth: &[Stamped], t: f64) -> Option<usize> {
    let i = truth.partition_point(|s| s.t < t);
    let before = i.checked_sub(1);
    let after = (i < truth.len()).then_some(i);
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - truth[b].t <= truth[a].t - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Pairs each estimate with its nearest-stamp truth sample within `max_dt`.
/// Returns the pairs (estimate index, truth index).
pub fn pair_by_stamp(est: &[Stamped], truth: &[Stamped], max_dt: f64) -> Result<Vec<(usize, usize)>, EvalError> {
    check_sorted(est, "estimate")?;
    check_sorted(truth, "truth")?;
    Ok(est
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let j = nearest(truth, e.t)?;
            ((truth[j].t - e.t).abs() <= max_dt).then_some((i, j))
        })
        .collect())
}

/// Per-sample errors over the paired stamps.
pub fn pose_errors(est: &[Stamped], truth: &[Stamped], max_dt: f64) -> Result<Vec<PoseError>, EvalError> {
    let pairs = pair_by_stamp(est, truth, max_dt)?;
    if pairs.is_empty() {
        return Err(EvalError::EmptyOverlap { max_dt });
    }
    Ok(pairs
        .into_iter()
        .map(|(i, j)| {
            let (e, g) = (&est[i].pose, &truth[j].pose);
            PoseError {
                t: est[i].t,
                position: e.position().distance(&g.position()),
                heading: wrap_angle(e.theta() - g.theta()),
            }
        })
        .collect())
}

/// Absolute position error. The two trajectories must already share a frame;
/// no alignment is attempted.
pub fn ate_rmse(est: &[Stamped], truth: &[Stamped], max_dt: f64) -> Result<AteReport, EvalError> {
    let errs = pose_errors(est, truth, max_dt)?;
    let n = errs.len() as f64;
    let sq: f64 = errs.iter().map(|e| e.position * e.position).sum();
    Ok(AteReport {
        rmse_m: (sq / n).sqrt(),
        mean_m: errs.iter().map(|e| e.position).sum::<f64>() / n,
        max_m: errs.iter().map(|e| e.position).fold(0.0, f64::max),
        n_pairs: errs.len(),
        n_unpaired: est.len() - errs.len(),
    })
}

pub fn heading_rmse(est: &[Stamped], truth: &[Stamped], max_dt: f64) -> Result<f64, EvalError> {
    let errs = pose_errors(est, truth, max_dt)?;
    let sq: f64 = errs.iter().map(|e| e.heading * e.heading).sum();
    Ok((sq / errs.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapScore {
    pub occ_iou: f64,
    pub occ_precision: f64,
    pub occ_recall: f64,
    pub agreement: f64,
    /// False when the prediction has no known cells in the overlap, in which
    /// case `agreement` is reported as 0.
    pub agreement_defined: bool,
    /// Cells of the predicted map inside the overlap.
    pub compared_cells: usize,
}

/// Whether `grid` has an occupied cell in the 3x3 block around signed cell `c`.
fn occupied_near(grid: &OccupancyGrid, c: (i64, i64)) -> bool {
    (-1..=1).any(|dr| {
        (-1..=1).any(|dc| {
            grid.cell_from_signed(c.0 + dc, c.1 + dr)
                .is_some_and(|n| grid.class(n) == CellClass::Occupied)
        })
    })
}

fn cells_inside(grid: &OccupancyGrid, rect: (f64, f64, f64, f64)) -> impl Iterator<Item = Cell> + '_ {
    (0..grid.len()).map(|i| grid.cell_at(i)).filter(move |c| {
        let p = grid.cell_center(*c);
        p.x >= rect.0 && p.x < rect.2 && p.y >= rect.1 && p.y < rect.3
    })
}

/// Compares a built map against a truth raster over the intersection of
/// their extents. Cells are matched by center, so the two lattices need not
/// share an origin. Occupied cells match within one cell in either direction.
pub fn map_compare(slam: &OccupancyGrid, truth: &OccupancyGrid) -> Result<MapScore, EvalError> {
    let (ra, rb) = (slam.resolution(), truth.resolution());
    if (ra - rb).abs() > 1e-9 * ra.max(rb) {
        return Err(EvalError::ResolutionMismatch { a: ra, b: rb });
    }
    let (a, b) = (slam.extent(), truth.extent());
    let rect = (a.0.max(b.0), a.1.max(b.1), a.2.min(b.2), a.3.min(b.3));
    if !(rect.0 < rect.2 && rect.1 < rect.3) {
        return Err(EvalError::DisjointExtents);
    }

    let mut compared = 0;
    let mut pred_occ = 0;
    let mut hits = 0;
    let mut known = 0;
    let mut agree = 0;
    for c in cells_inside(slam, rect) {
        let p = slam.cell_center(c);
        let tc = truth.world_to_cell_signed(p);
        let Some(t) = truth.cell_from_signed(tc.0, tc.1) else {
            continue;
        };
        compared += 1;
        let class = slam.class(c);
        if class == CellClass::Occupied {
            pred_occ += 1;
            hits += usize::from(occupied_near(truth, tc));
        }
        if class != CellClass::Unknown {
            known += 1;
            agree += usize::from(class == truth.class(t));
        }
    }
    if compared == 0 {
        return Err(EvalError::DisjointExtents);
    }

    let mut truth_occ = 0;
    let mut recalled = 0;
    for c in cells_inside(truth, rect) {
        if truth.class(c) != CellClass::Occupied {
            continue;
        }
        let sc = slam.world_to_cell_signed(truth.cell_center(c));
        truth_occ += 1;
        recalled += usize::from(occupied_near(slam, sc));
    }

    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    // Matched predictions over predicted cells plus truth cells left unmatched.
    Ok(MapScore {
        occ_iou: ratio(hits, pred_occ + truth_occ - recalled),
        occ_precision: ratio(hits, pred_occ),
        occ_recall: ratio(recalled, truth_occ),
        agreement: ratio(agree, known),
        agreement_defined: known > 0,
        compared_cells: compared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Pose2};
    use crate::grid::{rasterize_world, L_CLAMP};
    use crate::sim::WorldModel;
    use proptest::prelude::*;

    fn traj(samples: &[(f64, f64, f64, f64)]) -> Vec<Stamped> {
        samples
            .iter()
            .map(|&(t, x, y, th)| Stamped {
                t,
                pose: Pose2::new(x, y, th),
            })
            .collect()
    }

    fn wiggle(n: usize) -> Vec<Stamped> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.1;
                Stamped {
                    t,
                    pose: Pose2::new(t.sin(), t * 0.3, 0.2 * t),
                }
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let g = wiggle(50);
        let r = ate_rmse(&g, &g, 0.05).unwrap();
        assert_eq!((r.rmse_m, r.mean_m, r.max_m, r.n_pairs), (0.0, 0.0, 0.0, 50));
        assert_eq!(heading_rmse(&g, &g, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_is_pythagorean() {
        let g = wiggle(30);
        let e: Vec<Stamped> = g
            .iter()
            .map(|s| Stamped {
                t: s.t,
                pose: Pose2::new(s.pose.x + 0.3, s.pose.y + 0.4, s.pose.theta() + 0.1),
            })
            .collect();
        let r = ate_rmse(&e, &g, 0.05).unwrap();
        for v in [r.rmse_m, r.mean_m, r.max_m] {
            assert!((v - 0.5).abs() < 1e-12, "{r:?}");
        }
        assert!((heading_rmse(&e, &g, 0.05).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn heading_error_wraps() {
        let pi = std::f64::consts::PI;
        let g = traj(&[(0.0, 0.0, 0.0, 3.0), (1.0, 0.0, 0.0, -2.0)]);
        let e = traj(&[(0.0, 0.0, 0.0, 3.0 + pi - 0.01), (1.0, 0.0, 0.0, -2.0 + pi - 0.01)]);
        let r = heading_rmse(&e, &g, 0.05).unwrap();
        assert!((r - (pi - 0.01)).abs() < 1e-9, "{r}");
    }

    #[test]
    fn no_overlap_is_an_error() {
        let g = traj(&[(0.0, 0.0, 0.0, 0.0)]);
        let e = traj(&[(1.0, 0.0, 0.0, 0.0)]);
        assert!(matches!(ate_rmse(&e, &g, 0.05), Err(EvalError::EmptyOverlap { .. })));
        assert!(matches!(ate_rmse(&[], &g, 0.05), Err(EvalError::EmptyOverlap { .. })));
        let unsorted = traj(&[(1.0, 0.0, 0.0, 0.0), (0.5, 0.0, 0.0, 0.0)]);
        assert!(matches!(ate_rmse(&unsorted, &g, 0.05), Err(EvalError::Unsorted { index: 1, .. })));
    }

    fn brute_pairs(est: &[Stamped], truth: &[Stamped], max_dt: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, e) in est.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in truth.iter().enumerate() {
                let d = (g.t - e.t).abs();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            if let Some((j, d)) = best {
                if d <= max_dt {
                    out.push((i, j));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn pairing_matches_brute_force(
            mut te in prop::collection::vec(0.0..10.0f64, 0..60),
            mut tg in prop::collection::vec(0.0..10.0f64, 0..60),
            max_dt in 0.0..0.3f64,
        ) {
            te.sort_by(f64::total_cmp);
            tg.sort_by(f64::total_cmp);
            let est: Vec<Stamped> = te.iter().map(|&t| Stamped { t, pose: Pose2::identity() }).collect();
            let truth: Vec<Stamped> = tg.iter().map(|&t| Stamped { t, pose: Pose2::identity() }).collect();
            let fast = pair_by_stamp(&est, &truth, max_dt).unwrap();
            let slow = brute_pairs(&est, &truth, max_dt);
            // Equidistant neighbors may differ in index but never in stamp gap.
            prop_assert_eq!(fast.len(), slow.len());
            for (f, s) in fast.iter().zip(&slow) {
                prop_assert_eq!(f.0, s.0);
                prop_assert_eq!((truth[f.1].t - est[f.0].t).abs(), (truth[s.1].t - est[s.0].t).abs());
            }
        }

        #[test]
        fn error_statistics_are_ordered(offsets in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..40)) {
            let truth: Vec<Stamped> = (0..offsets.len()).map(|i| Stamped { t: i as f64, pose: Pose2::identity() }).collect();
            let est: Vec<Stamped> = offsets.iter().enumerate()
                .map(|(i, &(dx, dy))| Stamped { t: i as f64, pose: Pose2::new(dx, dy, 0.0) })
                .collect();
            let r = ate_rmse(&est, &truth, 0.05).unwrap();
            prop_assert!(r.rmse_m >= r.mean_m - 1e-12);
            prop_assert!(r.max_m >= r.rmse_m - 1e-12);
        }
    }

    fn maze_truth() -> OccupancyGrid {
        let w = WorldModel::from_json(include_str!("../../../worlds/maze.json")).unwrap();
        rasterize_world(&w, 0.05)
    }

    #[test]
    fn map_against_itself_is_perfect() {
        let g = maze_truth();
        let s = map_compare(&g, &g).unwrap();
        assert_eq!((s.occ_iou, s.occ_precision, s.occ_recall, s.agreement), (1.0, 1.0, 1.0, 1.0));
        assert!(s.agreement_defined);
    }

    #[test]
    fn unknown_prediction_scores_zero_with_flag() {
        let g = maze_truth();
        let blank = OccupancyGrid::new(g.resolution(), g.width(), g.height(), g.origin());
        let s = map_compare(&blank, &g).unwrap();
        assert_eq!((s.occ_recall, s.agreement, s.agreement_defined), (0.0, 0.0, false));
    }

    #[test]
    fn one_cell_shift_keeps_iou() {
        let g = maze_truth();
        let (w, h) = (g.width(), g.height());
        let mut shifted = OccupancyGrid::new(g.resolution(), w, h, g.origin());
        for row in 0..h {
            for col in 1..w {
                let l = g.logodds(Cell::new(col - 1, row));
                shifted.set_logodds(Cell::new(col, row), l);
            }
        }
        // Compare over the part where the shifted copy still carries the truth.
        let s = map_compare(&shifted, &g).unwrap();
        assert!(s.agreement < 1.0);
        assert!(s.occ_precision == 1.0, "{s:?}");
        // Walls on the rightmost column fall off the shifted copy.
        let lost = (0..h).filter(|r| g.is_occupied(Cell::new(w - 1, *r))).count();
        assert_eq!(lost, 0, "fixture walls should stay inside the raster");
        assert_eq!(s.occ_iou, 1.0, "{s:?}");
    }

    #[test]
    fn geometry_errors_are_distinct() {
        let a = OccupancyGrid::new(0.05, 10, 10, Point2::new(0.0, 0.0));
        let b = OccupancyGrid::new(0.1, 10, 10, Point2::new(0.0, 0.0));
        let far = OccupancyGrid::new(0.05, 10, 10, Point2::new(5.0, 5.0));
        assert!(matches!(map_compare(&a, &b), Err(EvalError::ResolutionMismatch { .. })));
        assert_eq!(map_compare(&a, &far), Err(EvalError::DisjointExtents));
    }

    #[test]
    fn offset_lattices_compare_over_the_overlap() {
        let g = maze_truth();
        let res = g.resolution();
        // A crop of the truth, one cell in from each side.
        let mut crop = OccupancyGrid::new(res, g.width() - 2, g.height() - 2, Point2::new(g.origin().x + res, g.origin().y + res));
        for i in 0..crop.len() {
            let c = crop.cell_at(i);
            crop.set_logodds(c, g.logodds(Cell::new(c.col + 1, c.row + 1)));
        }
        let s = map_compare(&crop, &g).unwrap();
        assert_eq!((s.occ_iou, s.agreement), (1.0, 1.0));
        assert_eq!(s.compared_cells, crop.len());
    }

    fn classes_grid(cells: &[u8], n: usize) -> OccupancyGrid {
        let l = cells.iter().map(|c| if *c == 0 { -L_CLAMP } else { L_CLAMP }).collect();
        OccupancyGrid::from_cells(0.1, n, n, Point2::new(0.0, 0.0), l)
    }

    proptest! {
        #[test]
        fn scores_are_bounded_and_agreement_symmetric(
            a in prop::collection::vec(0u8..2, 64),
            b in prop::collection::vec(0u8..2, 64),
        ) {
            let (ga, gb) = (classes_grid(&a, 8), classes_grid(&b, 8));
            let ab = map_compare(&ga, &gb).unwrap();
            let ba = map_compare(&gb, &ga).unwrap();
            for v in [ab.occ_iou, ab.occ_precision, ab.occ_recall, ab.agreement] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(ab.agreement, ba.agreement);
        }
    }
}
