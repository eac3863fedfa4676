//! Rao-Blackwellized particle-filter grid SLAM.
//!
//! Each particle carries a pose, a log-weight, its own occupancy grid and the
//! trajectory that built it. An update samples the odometry motion model,
//! scan-matches against the particle's map, weights by the matched score,
//! integrates the scan and resamples when the effective sample size drops.

mod matcher;
mod motion;
mod resample;

pub use matcher::{match_points, scan_match, scan_score, score_points, MatchConfig};
pub use motion::{sample_odometry_motion, MotionNoise, OdomDelta};
pub use resample::{
    effective_sample_size, normalize_log_weights, resample_low_variance, resample_low_variance_indices,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::grid::{build_likelihood_field, GridError, LikelihoodField, OccupancyGrid};
use crate::log::{Stamped, Trajectory};
use crate::rng::{keyed_stream, Stream};
use crate::sim::LidarScan;

/// Namespace tag for per-particle motion streams; the update counter is mixed in.
const PARTICLE_NS: u64 = 0x51A4 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlamConfig {
    pub n_particles: usize,
    /// Resample when `N_eff / n` falls below this.
    pub resample_ratio: f64,
    /// Odometry travel that triggers an update, meters.
    pub linear_update: f64,
    /// Odometry rotation that triggers an update, radians.
    pub angular_update: f64,
    pub matcher: MatchConfig,
    pub motion: MotionNoise,
    pub resolution: f64,
    /// Side length of the square map centered on the start pose, meters.
    pub map_size: f64,
    /// Cap of the per-particle likelihood field, meters.
    pub field_max_dist: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            n_particles: 30,
            resample_ratio: 0.5,
            linear_update: 0.25,
            angular_update: 0.25,
            matcher: MatchConfig::default(),
            motion: MotionNoise::default(),
            resolution: 0.05,
            map_size: 16.0,
            field_max_dist: 0.5,
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_particles == 0 {
            return Err("slam needs at least one particle".into());
        }
        if !(self.linear_update > 0.0 && self.angular_update > 0.0) {
            return Err("slam update thresholds must be positive".into());
        }
        if !(self.resolution > 0.0 && self.map_size > 0.0 && self.field_max_dist > 0.0) {
            return Err("slam map geometry must be positive".into());
        }
        self.matcher.validate()?;
        self.motion.validate()
    }

    /// Whether accumulated odometry motion warrants an update.
    pub fn should_update(&self, delta: &OdomDelta) -> bool {
        delta.trans >= self.linear_update || delta.rotation().abs() >= self.angular_update
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub pose: Pose2,
    pub log_weight: f64,
    pub map: OccupancyGrid,
    field: LikelihoodField,
    pub trajectory: Trajectory,
}

impl Particle {
    pub fn field(&self) -> &LikelihoodField {
        &self.field
    }
}

/// Summary of one filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamStep {
    pub best: usize,
    pub n_eff: f64,
    pub resampled: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct Slam {
    cfg: SlamConfig,
    seed: u64,
    particles: Vec<Particle>,
    weights: Vec<f64>,
    best: usize,
    updates: u64,
    degenerate_events: usize,
    resamples: usize,
}

impl Slam {
    /// Starts every particle at `start` with the first scan already integrated.
    pub fn new(cfg: SlamConfig, seed: u64, start: Pose2, first_scan: &LidarScan) -> Result<Self, GridError> {
        let mut map = OccupancyGrid::centered(cfg.resolution, cfg.map_size, cfg.map_size, start.position());
        map.integrate_scan(&start, first_scan)?;
        let field = build_likelihood_field(&map, cfg.field_max_dist);
        let n = cfg.n_particles;
        let p = Particle {
            pose: start,
            log_weight: 0.0,
            map,
            field,
            trajectory: vec![Stamped {
                t: first_scan.stamp,
                pose: start,
            }],
        };
        Ok(Self {
            cfg,
            seed,
            particles: vec![p; n],
            weights: vec![1.0 / n as f64; n],
            best: 0,
            updates: 0,
            degenerate_events: 0,
            resamples: 0,
        })
    }

    pub fn config(&self) -> &SlamConfig {
        &self.cfg
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Normalized weights, aligned with [`particles`](Self::particles).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn best(&self) -> &Particle {
        &self.particles[self.best]
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn degenerate_events(&self) -> usize {
        self.degenerate_events
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    /// One filter update for the odometry increment since the previous update.
    /// The caller gates calls with [`SlamConfig::should_update`].
    pub fn process_scan(&mut self, delta: &OdomDelta, scan: &LidarScan) -> SlamStep {
        self.updates += 1;
        let update = self.updates;
        let seed = self.seed;
        let cfg = self.cfg;
        let points = scan.endpoints();
        self.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
            let mut rng = keyed_stream(seed, PARTICLE_NS | update, i as u64);
            let guess = sample_odometry_motion(&p.pose, delta, &cfg.motion, &mut rng);
            let (pose, score) = match_points(&p.field, &points, guess, &cfg.matcher);
            p.pose = pose;
            p.log_weight += score.ln();
            // Poses that wander off the map keep their weight but stop mapping.
            if let Ok(Some(changed)) = p.map.integrate_scan_tracked(&pose, scan) {
                p.field.update(&p.map, changed);
            }
            p.trajectory.push(Stamped { t: scan.stamp, pose });
        });

        let log_w: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let degenerate = !normalize_log_weights(&log_w, &mut self.weights);
        if degenerate {
            self.degenerate_events += 1;
        }
        for (p, w) in self.particles.iter_mut().zip(&self.weights) {
            p.log_weight = w.ln();
        }
        self.best = argmax(&self.weights);
        let n = self.particles.len();
        let n_eff = effective_sample_size(&self.weights);
        let resampled = n_eff < self.cfg.resample_ratio * n as f64;
        if resampled {
            let mut rng = keyed_stream(seed, Stream::SlamResample as u64, update);
            let idx = resample_low_variance(&self.weights, &mut rng);
            // The top particle always survives: its interval is at least 1/n wide.
            let best = idx.iter().position(|&i| i == self.best).expect("best particle survives");
            self.particles = idx.iter().map(|&i| self.particles[i].clone()).collect();
            self.weights.fill(1.0 / n as f64);
            for p in &mut self.particles {
                p.log_weight = -(n as f64).ln();
            }
            self.best = best;
            self.resamples += 1;
        }
        SlamStep {
            best: self.best,
            n_eff,
            resampled,
            degenerate,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
