use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Pose2};
use crate::rng::gaussian;
use crate::sim::WorldModel;

/// Planar range sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub sigma_range: f64,
    pub min_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: 180,
            fov: TAU,
            max_range: 4.0,
            sigma_range: 0.01,
            min_range: 0.05,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_beams < 2 {
            return Err("lidar needs at least two beams".into());
        }
        if !(self.fov > 0.0 && self.fov <= TAU) {
            return Err("lidar fov must be in (0, 2pi]".into());
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return Err("lidar ranges must satisfy 0 <= min_range < max_range".into());
        }
        if self.sigma_range < 0.0 {
            return Err("lidar sigma_range must be nonnegative".into());
        }
        Ok(())
    }

    /// First beam angle and spacing. A full circle spaces beams fov/n apart so the
    /// first and last beam do not coincide.
    pub fn beam_layout(&self) -> (f64, f64) {
        let full = self.fov >= TAU - 1e-12;
        let inc = if full {
            self.fov / self.n_beams as f64
        } else {
            self.fov / (self.n_beams - 1) as f64
        };
        (-self.fov / 2.0, inc)
    }
}

/// One sweep of range readings. Beam `i` points at `angle_min + i·angle_inc` in the
/// robot frame. A reading above `range_max` means no return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub stamp: f64,
    pub angle_min: f64,
    pub angle_inc: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub ranges: Vec<f64>,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_inc
    }

    /// Value stored for beams without a return.
    pub fn no_return(&self) -> f64 {
        self.range_max + 1.0
    }

    pub fn is_return(&self, range: f64) -> bool {
        range <= self.range_max
    }

    /// (beam index, angle, range) for beams with a return.
    pub fn returns(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.ranges
            .iter()
            .enumerate()
            .filter(|(_, &r)| self.is_return(r))
            .map(|(i, &r)| (i, self.angle(i), r))
    }

    /// Beam endpoint in the robot frame.
    pub fn endpoint(&self, i: usize) -> Point2 {
        let (s, c) = self.angle(i).sin_cos();
        Point2::new(self.ranges[i] * c, self.ranges[i] * s)
    }

    /// Endpoints of returning beams, in the robot frame.
    pub fn endpoints(&self) -> Vec<Point2> {
        self.returns()
            .map(|(_, a, r)| Point2::new(r * a.cos(), r * a.sin()))
            .collect()
    }
}

/// Raycasts every beam from `pose`, adds range noise and clamps. Draws exactly
/// `n_beams` normal samples from `rng`, in beam order.
pub fn simulate_lidar<R: Rng + ?Sized>(
    world: &WorldModel,
    pose: &Pose2,
    cfg: &LidarConfig,
    stamp: f64,
    rng: &mut R,
) -> LidarScan {
    let (angle_min, angle_inc) = cfg.beam_layout();
    let origin = pose.position();
    let no_return = cfg.max_range + 1.0;
    let ranges = (0..cfg.n_beams)
        .map(|i| {
            let angle = pose.theta() + angle_min + i as f64 * angle_inc;
            let noise = gaussian(rng, cfg.sigma_range);
            match world.raycast(origin, angle, cfg.max_range) {
                Some(r) => (r + noise).clamp(cfg.min_range, cfg.max_range),
                None => no_return,
            }
        })
        .collect();
    LidarScan {
        stamp,
        angle_min,
        angle_inc,
        range_min: cfg.min_range,
        range_max: cfg.max_range,
        ranges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuConfig {
    /// White gyro noise, rad/s.
    pub sigma_gyro: f64,
    /// Bias random-walk intensity, rad/s per sqrt(s).
    pub sigma_bias_walk: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            sigma_gyro: 0.02,
            sigma_bias_walk: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub stamp: f64,
    pub gyro_z: f64,
    /// Bias in effect for this sample.
    pub bias_state: f64,
}

/// Gyro with a random-walk bias.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuModel {
    pub cfg: ImuConfig,
    pub bias: f64,
}

impl ImuModel {
    pub fn new(cfg: ImuConfig) -> Self {
        Self { cfg, bias: 0.0 }
    }

    /// One reading of `true_w`, then advances the bias over `dt`. Two normal draws per call.
    pub fn sample<R: Rng + ?Sized>(&mut self, true_w: f64, dt: f64, stamp: f64, rng: &mut R) -> ImuSample {
        debug_assert!(dt > 0.0);
        let out = ImuSample {
            stamp,
            gyro_z: true_w + self.bias + gaussian(rng, self.cfg.sigma_gyro),
            bias_state: self.bias,
        };
        self.bias += gaussian(rng, self.cfg.sigma_bias_walk * dt.sqrt());
        out
    }
}

/// Additive Gaussian noise on the executed wheel twist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdomNoise {
    pub sigma_v: f64,
    pub sigma_w: f64,
}

impl Default for OdomNoise {
    fn default() -> Self {
        Self {
            sigma_v: 0.02,
            sigma_w: 0.05,
        }
    }
}
