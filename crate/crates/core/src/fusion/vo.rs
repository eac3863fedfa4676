use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Pose2};
use crate::grid::{build_likelihood_field, CellWalk, LikelihoodField, OccupancyGrid, L_CLAMP};
use crate::slam::{match_points, MatchConfig};
use crate::sim::LidarScan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoSource {
    /// Scan-to-keyframe matching.
    ScanMatch,
    /// Exact displacements from ground-truth records; isolates the filter.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoConfig {
    pub source: VoSource,
    /// Start a new keyframe after this much travel, meters.
    pub keyframe_dist: f64,
    /// ... or this much rotation, radians.
    pub keyframe_angle: f64,
    pub resolution: f64,
    pub local_map_size: f64,
    pub field_max_dist: f64,
    /// Neighbouring endpoints closer than this are joined into a wall in the
    /// keyframe map, so sparse beams do not leave ripples along surfaces.
    pub join_gap: f64,
    pub matcher: MatchConfig,
    /// Standard deviations of (dx, dy, dθ) at a perfect match score.
    pub floor_sigma: [f64; 3],
}

impl Default for VoConfig {
    fn default() -> Self {
        Self {
            source: VoSource::ScanMatch,
            keyframe_dist: 0.3,
            keyframe_angle: 0.3,
            resolution: 0.05,
            local_map_size: 10.0,
            field_max_dist: 0.5,
            join_gap: 0.2,
            matcher: MatchConfig::default(),
            floor_sigma: [0.01, 0.01, 0.02],
        }
    }
}

impl VoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.keyframe_dist > 0.0 && self.keyframe_angle > 0.0) {
            return Err("keyframe thresholds must be positive".into());
        }
        if !(self.resolution > 0.0 && self.local_map_size > 0.0 && self.field_max_dist > 0.0) {
            return Err("visual odometry map geometry must be positive".into());
        }
        if !(self.join_gap >= 0.0) {
            return Err("join_gap must be nonnegative".into());
        }
        if !self.floor_sigma.iter().all(|s| *s > 0.0) {
            return Err("visual odometry sigmas must be positive".into());
        }
        self.matcher.validate()
    }
}

/// Scan-to-keyframe odometry. Each keyframe is a local grid holding one scan
/// in its own frame; later scans are matched against it until the robot has
/// moved far enough to start a new one.
#[derive(Debug, Clone)]
pub struct ScanOdometry {
    cfg: VoConfig,
    keyframe: Pose2,
    field: LikelihoodField,
    /// Latest matched pose in the keyframe's frame.
    rel: Pose2,
}

impl ScanOdometry {
    pub fn new(cfg: VoConfig, scan: &LidarScan, pose: Pose2) -> Self {
        Self {
            cfg,
            keyframe: pose,
            field: Self::keyframe_field(&cfg, scan),
            rel: Pose2::identity(),
        }
    }

    fn keyframe_field(cfg: &VoConfig, scan: &LidarScan) -> LikelihoodField {
        let s = cfg.local_map_size;
        let mut map = OccupancyGrid::centered(cfg.resolution, s, s, Point2::new(0.0, 0.0));
        map.integrate_scan(&Pose2::identity(), scan)
            .expect("keyframe origin lies inside its own map");
        let n = scan.len();
        let full_turn = n as f64 * scan.angle_inc.abs() >= std::f64::consts::TAU - 1e-9;
        let pairs = if full_turn { n } else { n.saturating_sub(1) };
        for i in 0..pairs {
            let j = (i + 1) % n;
            if !(scan.is_return(scan.ranges[i]) && scan.is_return(scan.ranges[j])) {
                continue;
            }
            let (a, b) = (scan.endpoint(i), scan.endpoint(j));
            if a.distance(&b) > cfg.join_gap {
                continue;
            }
            for (c, r) in CellWalk::new(&map, a, b) {
                if let Some(cell) = map.cell_from_signed(c, r) {
                    map.set_logodds(cell, L_CLAMP);
                }
            }
        }
        build_likelihood_field(&map, cfg.field_max_dist)
    }

    /// Current pose estimate in the world frame.
    pub fn pose(&self) -> Pose2 {
        self.keyframe.compose(&self.rel)
    }

    /// Matches `scan` starting from the previous pose moved by `predicted`
    /// (body frame). Returns the body-frame displacement since the previous
    /// scan and the match score, or `None` when the match found no support.
    pub fn track(&mut self, scan: &LidarScan, predicted: &Pose2) -> Option<(Pose2, f64)> {
        let guess = self.rel.compose(predicted);
        let (matched, score) = match_points(&self.field, &scan.endpoints(), guess, &self.cfg.matcher);
        if score <= 0.0 {
            // Nothing to anchor to; carry the prediction and start over here.
            self.keyframe = self.keyframe.compose(&guess);
            self.field = Self::keyframe_field(&self.cfg, scan);
            self.rel = Pose2::identity();
            return None;
        }
        let delta = self.rel.between(&matched);
        self.rel = matched;
        if matched.translation_norm() >= self.cfg.keyframe_dist || matched.theta().abs() >= self.cfg.keyframe_angle {
            self.keyframe = self.keyframe.compose(&matched);
            self.field = Self::keyframe_field(&self.cfg, scan);
            self.rel = Pose2::identity();
        }
        Some((delta, score))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap_angle;
    use crate::rng::keyed_stream;
    use crate::sim::{simulate_lidar, LidarConfig, WorldModel};

    #[test]
    fn recovers_small_motions_in_maze() {
        let w = WorldModel::from_json(include_str!("../../../../worlds/maze.json")).unwrap();
        let cfg = VoConfig::default();
        let lidar = LidarConfig::default();
        let mut rng = keyed_stream(4, 0, 0);
        let mut pose = Pose2::new(0.425, 1.0, 1.5708);
        let mut vo = ScanOdometry::new(cfg, &simulate_lidar(&w, &pose, &lidar, 0.0, &mut rng), pose);
        for k in 0..12 {
            let step = Pose2::new(0.03, 0.0, if k % 3 == 0 { 0.05 } else { 0.0 });
            pose = pose.compose(&step);
            let scan = simulate_lidar(&w, &pose, &lidar, 0.0, &mut rng);
            // The filter predicts with the gyro, so the rotation is roughly known.
            let predicted = Pose2::new(0.02, 0.0, step.theta());
            let (delta, score) = vo.track(&scan, &predicted).unwrap();
            assert!(score > 0.5);
            // Each delta is within the noise floor the filter assumes for it.
            let f = cfg.floor_sigma;
            assert!((delta.x - step.x).abs() < f[0] && (delta.y - step.y).abs() < f[1], "{k} {delta:?}");
            assert!(wrap_angle(delta.theta() - step.theta()).abs() < f[2], "{k} {delta:?}");
        }
        assert!(vo.pose().position().distance(&pose.position()) < 0.03);
        assert!(wrap_angle(vo.pose().theta() - pose.theta()).abs() < 0.02);
    }
}
