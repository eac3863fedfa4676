//! Sensor logs (JSON lines) and trajectory CSV files.
//!
//! Velocity-like records (`cmd`, `odom`, `imu`) are stamped at the start of the
//! interval they describe; `gt` and `scan` are stamped at the instant they were
//! taken. A simulator step from t0 to t1 therefore writes `cmd`, `odom` and `imu`
//! at t0 followed by `gt` (and possibly `scan`) at t1.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose2, Twist2};
use crate::sim::LidarScan;

/// Stamps may step backwards by at most this much before ingest rejects them.
pub const STAMP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} precedes previous timestamp {prev}")]
    NonMonotone { line: usize, t: f64, prev: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LogError {
    /// 1-based line number of the offending record, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::Parse { line, .. } | LogError::NonMonotone { line, .. } => Some(*line),
            LogError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPayload {
    pub angle_min: f64,
    pub angle_inc: f64,
    pub n: usize,
    pub range_min: f64,
    pub range_max: f64,
    pub ranges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RecordData {
    Scan(ScanPayload),
    Imu { gyro_z: f64 },
    Odom { v: f64, w: f64 },
    Gt { x: f64, y: f64, theta: f64 },
    Cmd { v: f64, w: f64 },
}

/// One line of a sensor log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    #[serde(flatten)]
    pub data: RecordData,
}

impl Record {
    pub fn scan(scan: &LidarScan) -> Self {
        Record {
            t: scan.stamp,
            data: RecordData::Scan(ScanPayload {
                angle_min: scan.angle_min,
                angle_inc: scan.angle_inc,
                n: scan.ranges.len(),
                range_min: scan.range_min,
                range_max: scan.range_max,
                ranges: scan.ranges.clone(),
            }),
        }
    }

    pub fn gt(t: f64, pose: &Pose2) -> Self {
        Record {
            t,
            data: RecordData::Gt {
                x: pose.x,
                y: pose.y,
                theta: pose.theta(),
            },
        }
    }

    pub fn cmd(t: f64, cmd: Twist2) -> Self {
        Record {
            t,
            data: RecordData::Cmd { v: cmd.v, w: cmd.w },
        }
    }

    pub fn odom(t: f64, twist: Twist2) -> Self {
        Record {
            t,
            data: RecordData::Odom {
                v: twist.v,
                w: twist.w,
            },
        }
    }

    pub fn imu(t: f64, gyro_z: f64) -> Self {
        Record {
            t,
            data: RecordData::Imu { gyro_z },
        }
    }

    pub fn as_scan(&self) -> Option<LidarScan> {
        match &self.data {
            RecordData::Scan(p) => Some(LidarScan {
                stamp: self.t,
                angle_min: p.angle_min,
                angle_inc: p.angle_inc,
                range_min: p.range_min,
                range_max: p.range_max,
                ranges: p.ranges.clone(),
            }),
            _ => None,
        }
    }

    pub fn as_gt(&self) -> Option<Pose2> {
        match self.data {
            RecordData::Gt { x, y, theta } => Some(Pose2::new(x, y, theta)),
            _ => None,
        }
    }

    pub fn as_cmd(&self) -> Option<Twist2> {
        match self.data {
            RecordData::Cmd { v, w } => Some(Twist2::new(v, w)),
            _ => None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

fn validate(rec: &Record, line: usize) -> Result<(), LogError> {
    if !rec.t.is_finite() {
        return Err(LogError::Parse {
            line,
            message: "non-finite timestamp".into(),
        });
    }
    if let RecordData::Scan(p) = &rec.data {
        if p.n != p.ranges.len() {
            return Err(LogError::Parse {
                line,
                message: format!("scan declares n={} but has {} ranges", p.n, p.ranges.len()),
            });
        }
        if !(p.angle_inc > 0.0) {
            return Err(LogError::Parse {
                line,
                message: "scan angle_inc must be positive".into(),
            });
        }
    }
    Ok(())
}

/// Parses a whole log, rejecting unknown record types and backwards timestamps.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<Record>, LogError> {
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate(&rec, line_no)?;
        if rec.t < prev - STAMP_TOLERANCE {
            return Err(LogError::NonMonotone {
                line: line_no,
                t: rec.t,
                prev,
            });
        }
        prev = prev.max(rec.t);
        out.push(rec);
    }
    Ok(out)
}

pub fn read_log_file(path: impl AsRef<std::path::Path>) -> Result<Vec<Record>, LogError> {
    let f = std::fs::File::open(path)?;
    read_log(std::io::BufReader::new(f))
}

pub fn write_log<W: Write>(mut w: W, records: &[Record]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    Ok(())
}

/// Ground-truth trajectory embedded in a log.
pub fn ground_truth(records: &[Record]) -> Vec<Stamped> {
    records
        .iter()
        .filter_map(|r| r.as_gt().map(|p| Stamped { t: r.t, pose: p }))
        .collect()
}

/// A timestamped pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped {
    pub t: f64,
    pub pose: Pose2,
}

pub type Trajectory = Vec<Stamped>;

pub const TRAJECTORY_HEADER: &str = "t,x,y,theta";

pub fn write_trajectory<W: Write>(mut w: W, traj: &[Stamped]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in traj {
        writeln!(w, "{},{},{},{}", s.t, s.pose.x, s.pose.y, s.pose.theta())?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(reader: R) -> Result<Trajectory, LogError> {
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if i == 0 {
            if line != TRAJECTORY_HEADER {
                return Err(LogError::Parse {
                    line: 1,
                    message: format!("expected header `{TRAJECTORY_HEADER}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| LogError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if vals.len() != 4 {
            return Err(LogError::Parse {
                line: line_no,
                message: format!("expected 4 columns, found {}", vals.len()),
            });
        }
        if vals[0] < prev - STAMP_TOLERANCE {
            return Err(LogError::NonMonotone {
                line: line_no,
                t: vals[0],
                prev,
            });
        }
        prev = prev.max(vals[0]);
        out.push(Stamped {
            t: vals[0],
            pose: Pose2::new(vals[1], vals[2], vals[3]),
        });
    }
    Ok(out)
}

pub fn read_trajectory_file(path: impl AsRef<std::path::Path>) -> Result<Trajectory, LogError> {
    let f = std::fs::File::open(path)?;
    read_trajectory(std::io::BufReader::new(f))
}
