//! Odometry front end: an EKF over (x, y, θ, v, w) fed by the gyro plus
//! either wheel odometry or scan-matching visual odometry.
//!
//! Velocity records are stamped at the start of the interval they describe,
//! so the filter predicts to a record's stamp and then corrects. In encoderless
//! mode a scan-to-keyframe match between consecutive scans yields a body-frame
//! displacement over `[t0, t1]`; the filter rewinds to `t0`, applies it as a
//! velocity-level measurement, then replays the buffered gyro readings.

mod ekf;
mod vo;

pub use ekf::{
    ekf_predict, ekf_update, measurement_model, predict_jacobian, propagate, EkfError, FusedState,
    Innovation, Matrix5, Measurement, MeasurementKind, ProcessNoise, Vector5,
};
pub use vo::{ScanOdometry, VoConfig, VoSource};

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::log::{Record, RecordData};
use crate::sim::LidarScan;

/// Records whose stamp goes backwards by more than this are dropped.
pub const ORDER_TOLERANCE: f64 = 1e-6;

/// Where the odometry that drives mapping comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OdomMode {
    #[serde(rename = "with_encoders")]
    WithEncoders,
    #[serde(rename = "encoderless")]
    Encoderless,
    /// Ground-truth poses, for isolating the mapper from odometry error.
    #[serde(rename = "gt-odom")]
    GtOdom,
}

impl OdomMode {
    pub const ALL: [OdomMode; 3] = [OdomMode::WithEncoders, OdomMode::Encoderless, OdomMode::GtOdom];

    pub fn as_str(&self) -> &'static str {
        match self {
            OdomMode::WithEncoders => "with_encoders",
            OdomMode::Encoderless => "encoderless",
            OdomMode::GtOdom => "gt-odom",
        }
    }
}

impl fmt::Display for OdomMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OdomMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        OdomMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown odometry mode {s:?} (expected with_encoders, encoderless or gt-odom)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub process: ProcessNoise,
    pub sigma_gyro: f64,
    pub sigma_odom_v: f64,
    pub sigma_odom_w: f64,
    /// Initial standard deviations of (x, y, θ, v, w). The start velocity is
    /// unknown, so v and w start wide.
    pub initial_sigma: [f64; 5],
    pub vo: VoConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            process: ProcessNoise::default(),
            sigma_gyro: 0.02,
            sigma_odom_v: 0.02,
            sigma_odom_w: 0.05,
            initial_sigma: [1e-3, 1e-3, 1e-3, 1.0, 1.0],
            vo: VoConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [self.sigma_gyro, self.sigma_odom_v, self.sigma_odom_w];
        if !pos.iter().all(|s| *s > 0.0) {
            return Err("fusion noise sigmas must be positive".into());
        }
        if !(self.process.q_accel >= 0.0 && self.process.q_alpha >= 0.0) {
            return Err("process noise must be nonnegative".into());
        }
        if !self.initial_sigma.iter().all(|s| *s >= 0.0) {
            return Err("initial sigmas must be nonnegative".into());
        }
        self.vo.validate()
    }

    fn initial_cov(&self) -> Matrix5 {
        Matrix5::from_diagonal(&Vector5::from_iterator(self.initial_sigma.iter().map(|s| s * s)))
    }
}

/// A scan paired with the odometry pose at its stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct OdomFrame {
    pub scan: LidarScan,
    pub odom: Pose2,
}

/// Streaming odometry front end. Feed records in log order with [`push`](Self::push).
#[derive(Debug, Clone)]
pub struct FrontEnd {
    mode: OdomMode,
    cfg: FusionConfig,
    state: FusedState,
    history: Vec<FusedState>,
    last_stamp: f64,
    skipped: usize,
    rejected: usize,
    last_gt: Option<Pose2>,
    // Encoderless bookkeeping: filter state at the previous scan and the gyro
    // readings received since.
    at_last_scan: Option<FusedState>,
    gyro_buffer: Vec<(f64, f64)>,
    vo: Option<ScanOdometry>,
    gt_at_last_scan: Option<Pose2>,
}

impl FrontEnd {
    pub fn new(mode: OdomMode, cfg: FusionConfig, start: Pose2, t0: f64) -> Self {
        Self {
            mode,
            cfg,
            state: FusedState::new(start, t0, cfg.initial_cov()),
            history: Vec::new(),
            last_stamp: f64::NEG_INFINITY,
            skipped: 0,
            rejected: 0,
            last_gt: None,
            at_last_scan: None,
            gyro_buffer: Vec::new(),
            vo: None,
            gt_at_last_scan: None,
        }
    }

    pub fn mode(&self) -> OdomMode {
        self.mode
    }

    pub fn state(&self) -> &FusedState {
        &self.state
    }

    /// Filter state after every processed record.
    pub fn history(&self) -> &[FusedState] {
        &self.history
    }

    /// Records dropped for going back in time.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Measurements the filter refused (for example a non-PD innovation).
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    fn advance(state: &mut FusedState, t: f64, q: &ProcessNoise) {
        if t > state.stamp {
            *state = ekf_predict(state, t - state.stamp, q);
        }
    }

    fn correct(state: &mut FusedState, z: Measurement, rejected: &mut usize) {
        match ekf_update(state, &z) {
            Ok((s, _)) => *state = s,
            Err(_) => *rejected += 1,
        }
    }

    fn gyro(&self, t: f64, w: f64) -> Measurement {
        Measurement {
            kind: MeasurementKind::Gyro {
                w,
                var: self.cfg.sigma_gyro * self.cfg.sigma_gyro,
            },
            stamp: t,
        }
    }

    /// Consumes one record; returns a frame when the record is a scan.
    pub fn push(&mut self, rec: &Record) -> Option<OdomFrame> {
        let t = rec.t;
        if t < self.last_stamp - ORDER_TOLERANCE {
            self.skipped += 1;
            return None;
        }
        self.last_stamp = self.last_stamp.max(t);
        let q = self.cfg.process;
        let frame = match (&rec.data, self.mode) {
            (RecordData::Gt { .. }, _) => {
                self.last_gt = rec.as_gt();
                None
            }
            (RecordData::Odom { v, w }, OdomMode::WithEncoders) => {
                Self::advance(&mut self.state, t, &q);
                let r = Matrix2::new(self.cfg.sigma_odom_v.powi(2), 0.0, 0.0, self.cfg.sigma_odom_w.powi(2));
                let z = Measurement {
                    kind: MeasurementKind::WheelOdom { v: *v, w: *w, r },
                    stamp: t,
                };
                Self::correct(&mut self.state, z, &mut self.rejected);
                None
            }
            (RecordData::Imu { gyro_z }, OdomMode::WithEncoders | OdomMode::Encoderless) => {
                if self.mode == OdomMode::Encoderless && self.at_last_scan.is_some() {
                    self.gyro_buffer.push((t, *gyro_z));
                } else {
                    Self::advance(&mut self.state, t, &q);
                    let z = self.gyro(t, *gyro_z);
                    Self::correct(&mut self.state, z, &mut self.rejected);
                }
                None
            }
            (RecordData::Scan(_), _) => {
                let scan = rec.as_scan().expect("scan record");
                self.on_scan(t, scan)
            }
            _ => return None,
        };
        if self.mode != OdomMode::GtOdom {
            self.history.push(self.state);
        }
        frame
    }

    fn on_scan(&mut self, t: f64, scan: LidarScan) -> Option<OdomFrame> {
        let q = self.cfg.process;
        match self.mode {
            OdomMode::GtOdom => self.last_gt.map(|odom| OdomFrame { scan, odom }),
            OdomMode::WithEncoders => {
                Self::advance(&mut self.state, t, &q);
                Some(OdomFrame {
                    odom: self.state.pose(),
                    scan,
                })
            }
            OdomMode::Encoderless => {
                let Some(prev) = self.at_last_scan else {
                    Self::advance(&mut self.state, t, &q);
                    self.at_last_scan = Some(self.state);
                    self.gt_at_last_scan = self.last_gt;
                    if self.cfg.vo.source == VoSource::ScanMatch {
                        self.vo = Some(ScanOdometry::new(self.cfg.vo, &scan, self.state.pose()));
                    }
                    return Some(OdomFrame {
                        odom: self.state.pose(),
                        scan,
                    });
                };
                let prior = self.replay(prev, t);
                let measured = match self.cfg.vo.source {
                    VoSource::ScanMatch => {
                        let vo = self.vo.as_mut().expect("visual odometry started at first scan");
                        vo.track(&scan, &prev.pose().between(&prior.pose()))
                    }
                    VoSource::GroundTruth => match (self.gt_at_last_scan, self.last_gt) {
                        (Some(a), Some(b)) => Some((a.between(&b), 1.0)),
                        _ => None,
                    },
                };
                self.gt_at_last_scan = self.last_gt;
                let mut state = prev;
                let dt = t - prev.stamp;
                if let Some((delta, score)) = measured {
                    if dt > 0.0 && score > 0.0 {
                        let f = self.cfg.vo.floor_sigma;
                        let r = Matrix3::from_diagonal(&Vector3::new(f[0] * f[0], f[1] * f[1], f[2] * f[2])) / score;
                        let z = Measurement {
                            kind: MeasurementKind::PoseDelta {
                                dx: delta.x,
                                dy: delta.y,
                                dtheta: delta.theta(),
                                dt,
                                r,
                            },
                            stamp: prev.stamp,
                        };
                        Self::correct(&mut state, z, &mut self.rejected);
                    }
                }
                self.state = self.replay(state, t);
                self.gyro_buffer.clear();
                self.at_last_scan = Some(self.state);
                Some(OdomFrame {
                    odom: self.state.pose(),
                    scan,
                })
            }
        }
    }

    /// Runs the buffered gyro readings forward from `from`, then predicts to `t`.
    fn replay(&mut self, from: FusedState, t: f64) -> FusedState {
        let q = self.cfg.process;
        let mut s = from;
        for &(tg, w) in &self.gyro_buffer {
            Self::advance(&mut s, tg, &q);
            let z = self.gyro(tg, w);
            Self::correct(&mut s, z, &mut self.rejected);
        }
        Self::advance(&mut s, t, &q);
        s
    }
}

/// First ground-truth pose in the log, or the identity at the first stamp.
pub fn initial_pose(records: &[Record]) -> (Pose2, f64) {
    records
        .iter()
        .find_map(|r| r.as_gt().map(|p| (p, r.t)))
        .unwrap_or((Pose2::identity(), records.first().map_or(0.0, |r| r.t)))
}

/// Result of running the front end over a whole log.
#[derive(Debug, Clone)]
pub struct FusionRun {
    pub states: Vec<FusedState>,
    pub frames: Vec<OdomFrame>,
    pub skipped: usize,
}

pub fn run_fusion(records: &[Record], mode: OdomMode, cfg: &FusionConfig) -> FusionRun {
    if records.is_empty() {
        return FusionRun {
            states: Vec::new(),
            frames: Vec::new(),
            skipped: 0,
        };
    }
    let (start, t0) = initial_pose(records);
    let mut fe = FrontEnd::new(mode, *cfg, start, t0);
    let frames = records.iter().filter_map(|r| fe.push(r)).collect();
    FusionRun {
        states: fe.history,
        frames,
        skipped: fe.skipped,
    }
}
