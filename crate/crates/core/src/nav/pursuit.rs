use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point2, Pose2, Twist2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PursuitConfig {
    pub lookahead: f64,
    pub v_cruise: f64,
    pub max_v: f64,
    pub max_w: f64,
    /// Speed ramps down linearly inside this distance of the final point.
    pub slow_radius: f64,
    /// Rotate in place while the bearing to the target exceeds this, radians.
    pub rotate_threshold: f64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            lookahead: 0.4,
            v_cruise: 0.3,
            max_v: 0.5,
            max_w: 1.5,
            slow_radius: 0.3,
            rotate_threshold: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl PursuitConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.lookahead, self.v_cruise, self.max_v, self.max_w];
        if !all.iter().all(|v| *v > 0.0) || !(self.slow_radius >= 0.0 && self.rotate_threshold > 0.0) {
            return Err("pursuit parameters must be positive".into());
        }
        Ok(())
    }
}

/// Pure-pursuit command toward the lookahead point past waypoint `closest`.
/// Speed ramps down with the arc length left to the end of the path.
fn pursue(pose: &Pose2, points: &[Point2], closest: usize, cfg: &PursuitConfig) -> Twist2 {
    let mut target = None;
    let mut arc = 0.0;
    for w in points[closest..].windows(2) {
        arc += w[0].distance(&w[1]);
        if target.is_none() && arc >= cfg.lookahead {
            target = Some(w[1]);
        }
    }
    let target = target.unwrap_or(*points.last().expect("path is nonempty"));
    let to_goal = arc + pose.position().distance(&points[closest]);
    let alpha = wrap_angle((target.y - pose.y).atan2(target.x - pose.x) - pose.theta());
    if alpha.abs() > cfg.rotate_threshold {
        let w = 0.5 * cfg.max_w;
        return Twist2::new(0.0, if alpha >= 0.0 { w } else { -w });
    }
    let scale = if cfg.slow_radius > 0.0 {
        (to_goal / cfg.slow_radius).min(1.0)
    } else {
        1.0
    };
    let v = (cfg.v_cruise * scale).min(cfg.max_v);
    let kappa = 2.0 * alpha.sin() / cfg.lookahead;
    Twist2::new(v, v * kappa).clamped(cfg.max_v, cfg.max_w)
}

fn closest_in(pose: &Pose2, points: &[Point2], from: usize, to: usize) -> usize {
    let p = pose.position();
    let mut best = from;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate().take(to).skip(from) {
        let d = p.distance(q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Stateless pure pursuit: the closest waypoint is searched over the whole path.
pub fn pure_pursuit(pose: &Pose2, path: &[Point2], cfg: &PursuitConfig) -> Twist2 {
    let closest = closest_in(pose, path, 0, path.len());
    pursue(pose, path, closest, cfg)
}

/// Pure pursuit with monotone progress along the path, so paths that pass
/// near themselves (loops) are followed in order.
#[derive(Debug, Clone)]
pub struct PathTracker {
    points: Vec<Point2>,
    /// Arc length from the start to each waypoint.
    arc: Vec<f64>,
    progress: usize,
}

impl PathTracker {
    pub fn new(points: Vec<Point2>) -> Self {
        assert!(!points.is_empty(), "path is nonempty");
        let mut arc = Vec::with_capacity(points.len());
        let mut s = 0.0;
        arc.push(0.0);
        for w in points.windows(2) {
            s += w[0].distance(&w[1]);
            arc.push(s);
        }
        Self {
            points,
            arc,
            progress: 0,
        }
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn progress(&self) -> usize {
        self.progress
    }

    /// Moves the progress marker to the closest waypoint within one lookahead
    /// (plus a margin) of arc length ahead.
    fn advance(&mut self, pose: &Pose2, window: f64) {
        let limit = self.arc[self.progress] + window;
        let end = self.arc.partition_point(|&s| s <= limit).max(self.progress + 1);
        self.progress = closest_in(pose, &self.points, self.progress, end.min(self.points.len()));
    }

    pub fn command(&mut self, pose: &Pose2, cfg: &PursuitConfig) -> Twist2 {
        self.advance(pose, 2.0 * cfg.lookahead);
        pursue(pose, &self.points, self.progress, cfg)
    }

    /// Distance from `pose` to the path polyline near the current progress.
    pub fn cross_track(&self, pose: &Pose2) -> f64 {
        let p = pose.position();
        let lo = self.progress.saturating_sub(2);
        let hi = (self.progress + 3).min(self.points.len());
        if hi - lo < 2 {
            return p.distance(&self.points[lo]);
        }
        self.points[lo..hi]
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Arc length left from the progress marker to the end.
    pub fn remaining(&self) -> f64 {
        self.arc.last().unwrap() - self.arc[self.progress]
    }
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(&Point2::new(a.x + t * dx, a.y + t * dy))
}
