use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Pose2};
use crate::grid::LikelihoodField;
use crate::sim::LidarScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Initial translation step, meters.
    pub step_xy: f64,
    /// Initial rotation step, radians.
    pub step_theta: f64,
    pub halvings: u32,
    /// Width of the endpoint kernel, meters.
    pub sigma: f64,
    /// Cap on accepted moves per step size.
    pub max_moves: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            step_xy: 0.05,
            step_theta: 0.025,
            halvings: 5,
            sigma: 0.1,
            max_moves: 40,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.step_xy > 0.0 && self.step_theta > 0.0 && self.sigma > 0.0) {
            return Err("scan-match steps and sigma must be positive".into());
        }
        Ok(())
    }

    /// Translation step after the last halving.
    pub fn final_step_xy(&self) -> f64 {
        self.step_xy / 2f64.powi(self.halvings as i32)
    }

    pub fn final_step_theta(&self) -> f64 {
        self.step_theta / 2f64.powi(self.halvings as i32)
    }
}

/// Mean endpoint kernel `exp(-d²/2σ²)` over robot-frame endpoints seen from
/// `pose`, with `d` interpolated from the likelihood field. Endpoints off the
/// grid, or with no occupied cell within the field's cap, contribute 0.
pub fn score_points(field: &LikelihoodField, pose: &Pose2, points: &[Point2], sigma: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let k = -0.5 / (sigma * sigma);
    let cap = field.d_max();
    let (s, c) = pose.theta().sin_cos();
    let mut sum = 0.0;
    for q in points {
        let p = Point2::new(pose.x + c * q.x - s * q.y, pose.y + s * q.x + c * q.y);
        if let Some(d) = field.interpolated_at(p) {
            if d < cap {
                sum += (k * d * d).exp();
            }
        }
    }
    sum / points.len() as f64
}

/// [`score_points`] over the returning beams of `scan`.
pub fn scan_score(field: &LikelihoodField, pose: &Pose2, scan: &LidarScan, sigma: f64) -> f64 {
    score_points(field, pose, &scan.endpoints(), sigma)
}

/// Greedy hill climb over the six axis moves (±x, ±y in the world frame, ±θ).
/// The best strictly improving move is taken; when none improves the steps are
/// halved, `halvings` times.
pub fn match_points(
    field: &LikelihoodField,
    points: &[Point2],
    init: Pose2,
    cfg: &MatchConfig,
) -> (Pose2, f64) {
    let mut best = init;
    let mut best_score = score_points(field, &best, points, cfg.sigma);
    if best_score == 0.0 {
        return (best, 0.0);
    }
    let (mut dxy, mut dth) = (cfg.step_xy, cfg.step_theta);
    for _ in 0..=cfg.halvings {
        for _ in 0..cfg.max_moves {
            let moves = [
                (dxy, 0.0, 0.0),
                (-dxy, 0.0, 0.0),
                (0.0, dxy, 0.0),
                (0.0, -dxy, 0.0),
                (0.0, 0.0, dth),
                (0.0, 0.0, -dth),
            ];
            let mut improved = None;
            let mut round_best = best_score;
            for (mx, my, mt) in moves {
                let cand = Pose2::new(best.x + mx, best.y + my, best.theta() + mt);
                let s = score_points(field, &cand, points, cfg.sigma);
                if s > round_best {
                    round_best = s;
                    improved = Some(cand);
                }
            }
            match improved {
                Some(p) => {
                    best = p;
                    best_score = round_best;
                }
                None => break,
            }
        }
        dxy *= 0.5;
        dth *= 0.5;
    }
    (best, best_score)
}

pub fn scan_match(field: &LikelihoodField, scan: &LidarScan, init: Pose2, cfg: &MatchConfig) -> (Pose2, f64) {
    match_points(field, &scan.endpoints(), init, cfg)
}
