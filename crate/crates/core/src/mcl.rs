//! Monte Carlo localization against a known occupancy grid, with the
//! likelihood-field measurement model and a fixed particle count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Cov3, Point2, Pose2};
use crate::grid::{build_likelihood_field, Cell, CellClass, LikelihoodField, OccupancyGrid};
use crate::rng::{gaussian, keyed_stream, Stream};
use crate::sim::LidarScan;
use crate::slam::{
    effective_sample_size, normalize_log_weights, resample_low_variance, sample_odometry_motion, MotionNoise,
    OdomDelta,
};

/// Namespace tag for per-particle streams; the update counter is mixed in.
const PARTICLE_NS: u64 = 0x3C1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MclInit {
    Gaussian { mean: Pose2, sigmas: [f64; 3] },
    UniformFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MclConfig {
    pub n_particles: usize,
    pub init: MclInit,
    /// Beams used per update, evenly strided over the scan.
    pub beam_subsample: usize,
    pub z_hit: f64,
    pub z_rand: f64,
    pub sigma_hit: f64,
    pub motion: MotionNoise,
    pub resample_ratio: f64,
    /// Cap of the likelihood field built from the map, meters.
    pub field_max_dist: f64,
}

impl Default for MclConfig {
    fn default() -> Self {
        Self {
            n_particles: 500,
            init: MclInit::UniformFree,
            beam_subsample: 30,
            z_hit: 0.95,
            z_rand: 0.05,
            sigma_hit: 0.1,
            motion: MotionNoise::default(),
            resample_ratio: 0.5,
            field_max_dist: 2.0,
        }
    }
}

impl MclConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_particles < 10 {
            return Err("mcl needs at least 10 particles".into());
        }
        if !(self.z_hit >= 0.0 && self.z_rand > 0.0 && ((self.z_hit + self.z_rand) - 1.0).abs() < 1e-9) {
            return Err("z_hit and z_rand must be nonnegative, with z_rand > 0, and sum to 1".into());
        }
        if !(self.sigma_hit > 0.0 && self.field_max_dist > 0.0) {
            return Err("sigma_hit and field_max_dist must be positive".into());
        }
        if self.beam_subsample == 0 {
            return Err("beam_subsample must be at least 1".into());
        }
        if let MclInit::Gaussian { sigmas, .. } = self.init {
            if !sigmas.iter().all(|s| *s >= 0.0) {
                return Err("initial sigmas must be nonnegative".into());
            }
        }
        self.motion.validate()
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum MclError {
    #[error("map has no free cells")]
    NoFreeCells,
    #[error("invalid mcl config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub mean: Pose2,
    pub cov: Cov3,
    pub n_eff: f64,
    pub stamp: f64,
}

/// What happened during one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MclStep {
    pub estimate: PoseEstimate,
    pub resampled: bool,
    /// Every particle was invalid and the set was redrawn over free space.
    pub reset: bool,
}

/// The known map with its likelihood field and free-cell list.
#[derive(Debug, Clone)]
pub struct KnownMap {
    pub grid: OccupancyGrid,
    pub field: LikelihoodField,
    free: Vec<Cell>,
}

impl KnownMap {
    pub fn new(grid: OccupancyGrid, field_max_dist: f64) -> Self {
        let field = build_likelihood_field(&grid, field_max_dist);
        let free = (0..grid.len())
            .map(|i| grid.cell_at(i))
            .filter(|&c| grid.class(c) == CellClass::Free)
            .collect();
        Self { grid, field, free }
    }

    pub fn free_cells(&self) -> &[Cell] {
        &self.free
    }

    /// A particle is invalid when its position is off the map or on an occupied cell.
    pub fn pose_is_valid(&self, pose: &Pose2) -> bool {
        self.grid
            .world_to_cell(pose.position())
            .is_some_and(|c| !self.grid.is_occupied(c))
    }
}

/// Draws the initial particle set.
pub fn mcl_init<R: Rng + ?Sized>(map: &KnownMap, cfg: &MclConfig, rng: &mut R) -> Result<Vec<Pose2>, MclError> {
    let n = cfg.n_particles;
    match cfg.init {
        MclInit::Gaussian { mean, sigmas } => Ok((0..n)
            .map(|_| {
                let dx = gaussian(rng, sigmas[0]);
                let dy = gaussian(rng, sigmas[1]);
                let dt = gaussian(rng, sigmas[2]);
                Pose2::new(mean.x + dx, mean.y + dy, mean.theta() + dt)
            })
            .collect()),
        MclInit::UniformFree => uniform_free(map, n, rng),
    }
}

fn uniform_free<R: Rng + ?Sized>(map: &KnownMap, n: usize, rng: &mut R) -> Result<Vec<Pose2>, MclError> {
    if map.free.is_empty() {
        return Err(MclError::NoFreeCells);
    }
    let res = map.grid.resolution();
    Ok((0..n)
        .map(|_| {
            let c = map.free[rng.random_range(0..map.free.len())];
            let center = map.grid.cell_center(c);
            let x = center.x + (rng.random::<f64>() - 0.5) * res;
            let y = center.y + (rng.random::<f64>() - 0.5) * res;
            let th = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Pose2::new(x, y, th)
        })
        .collect())
}

/// Indices of `count` beams evenly strided over `n`.
pub fn strided_beams(n: usize, count: usize) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    (0..count).map(|k| k * n / count).collect()
}

/// Log-likelihood of `points` (robot frame) seen from `pose`: the sum over
/// points of ln(z_hit·exp(-d²/2σ²) + z_rand). Points off the map get only the
/// random term.
pub fn log_likelihood(field: &LikelihoodField, pose: &Pose2, points: &[Point2], cfg: &MclConfig) -> f64 {
    let k = -0.5 / (cfg.sigma_hit * cfg.sigma_hit);
    let (s, c) = pose.theta().sin_cos();
    points
        .iter()
        .map(|q| {
            let p = Point2::new(pose.x + c * q.x - s * q.y, pose.y + s * q.x + c * q.y);
            let hit = field.interpolated_at(p).map_or(0.0, |d| (k * d * d).exp());
            (cfg.z_hit * hit + cfg.z_rand).ln()
        })
        .sum()
}

/// Weighted mean with a circular mean for heading, and the weighted covariance.
/// Sums run over offsets from the first pose, so a consensus set returns its
/// pose exactly.
pub fn weighted_estimate(poses: &[Pose2], weights: &[f64], stamp: f64) -> PoseEstimate {
    let r = poses.first().copied().unwrap_or_default();
    let (mut x, mut y, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for (p, w) in poses.iter().zip(weights) {
        let dth = wrap_angle(p.theta() - r.theta());
        x += w * (p.x - r.x);
        y += w * (p.y - r.y);
        s += w * dth.sin();
        c += w * dth.cos();
    }
    let mean = Pose2::new(r.x + x, r.y + y, r.theta() + s.atan2(c));
    let mut cov = Cov3::zeros();
    for (p, w) in poses.iter().zip(weights) {
        let e = nalgebra::Vector3::new(p.x - mean.x, p.y - mean.y, wrap_angle(p.theta() - mean.theta()));
        cov += *w * e * e.transpose();
    }
    PoseEstimate {
        mean,
        cov,
        n_eff: effective_sample_size(weights),
        stamp,
    }
}

#[derive(Debug, Clone)]
pub struct Mcl {
    cfg: MclConfig,
    seed: u64,
    map: KnownMap,
    particles: Vec<Pose2>,
    weights: Vec<f64>,
    updates: u64,
    resets: usize,
}

impl Mcl {
    pub fn new(cfg: MclConfig, map: KnownMap, seed: u64) -> Result<Self, MclError> {
        cfg.validate().map_err(MclError::Config)?;
        let mut rng = keyed_stream(seed, Stream::Mcl as u64, u64::MAX);
        let particles = mcl_init(&map, &cfg, &mut rng)?;
        let n = particles.len();
        Ok(Self {
            cfg,
            seed,
            map,
            particles,
            weights: vec![1.0 / n as f64; n],
            updates: 0,
            resets: 0,
        })
    }

    /// Starts from an explicit particle set with uniform weights.
    pub fn with_particles(cfg: MclConfig, map: KnownMap, seed: u64, particles: Vec<Pose2>) -> Result<Self, MclError> {
        cfg.validate().map_err(MclError::Config)?;
        if particles.is_empty() {
            return Err(MclError::Config("empty particle set".into()));
        }
        let n = particles.len();
        Ok(Self {
            cfg,
            seed,
            map,
            particles,
            weights: vec![1.0 / n as f64; n],
            updates: 0,
            resets: 0,
        })
    }

    pub fn config(&self) -> &MclConfig {
        &self.cfg
    }

    pub fn map(&self) -> &KnownMap {
        &self.map
    }

    pub fn particles(&self) -> &[Pose2] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn resets(&self) -> usize {
        self.resets
    }

    pub fn estimate(&self, stamp: f64) -> PoseEstimate {
        weighted_estimate(&self.particles, &self.weights, stamp)
    }

    /// Motion update, measurement weighting, estimate, then resampling when
    /// the effective sample size drops below the threshold.
    pub fn update(&mut self, delta: &OdomDelta, scan: &LidarScan) -> MclStep {
        self.updates += 1;
        let update = self.updates;
        let (seed, cfg) = (self.seed, self.cfg);
        let points: Vec<Point2> = strided_beams(scan.len(), cfg.beam_subsample)
            .into_iter()
            .filter(|&i| scan.is_return(scan.ranges[i]))
            .map(|i| scan.endpoint(i))
            .collect();
        let map = &self.map;
        let log_w: Vec<f64> = self
            .particles
            .par_iter_mut()
            .zip(self.weights.par_iter())
            .enumerate()
            .map(|(i, (p, &w))| {
                let mut rng = keyed_stream(seed, PARTICLE_NS | update, i as u64);
                *p = sample_odometry_motion(p, delta, &cfg.motion, &mut rng);
                if !map.pose_is_valid(p) {
                    return f64::NEG_INFINITY;
                }
                w.ln() + log_likelihood(&map.field, p, &points, &cfg)
            })
            .collect();

        let n = self.particles.len();
        let reset = log_w.iter().all(|l| *l == f64::NEG_INFINITY);
        if reset {
            let mut rng = keyed_stream(seed, Stream::Mcl as u64, update | (1 << 63));
            // A map without free cells cannot invalidate every particle through
            // occupancy alone, but it can through the map edge; keep the set then.
            if let Ok(ps) = uniform_free(map, n, &mut rng) {
                self.particles = ps;
            }
            self.weights = vec![1.0 / n as f64; n];
            self.resets += 1;
        } else {
            normalize_log_weights(&log_w, &mut self.weights);
        }

        let estimate = weighted_estimate(&self.particles, &self.weights, scan.stamp);
        let resampled = !reset && estimate.n_eff < cfg.resample_ratio * n as f64;
        if resampled {
            let mut rng = keyed_stream(seed, Stream::Mcl as u64, update);
            let idx = resample_low_variance(&self.weights, &mut rng);
            self.particles = idx.iter().map(|&i| self.particles[i]).collect();
            self.weights = vec![1.0 / n as f64; n];
        }
        MclStep {
            estimate,
            resampled,
            reset,
        }
    }
}
