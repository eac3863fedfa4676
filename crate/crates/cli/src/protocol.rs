//! WebSocket messages between the live server and its clients. All frames
//! are JSON text with a `type` tag.

use mazeslam_core::{CellClass, LidarScan, OccupancyGrid, OdomMode, Pose2};
use serde::{Deserialize, Serialize};

/// Map pixel values, shared with the PGM files.
pub const CELL_OCCUPIED: u32 = 0;
pub const CELL_FREE: u32 = 254;
pub const CELL_UNKNOWN: u32 = 205;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMsg {
    Teleop {
        v: f64,
        w: f64,
    },
    Goal {
        x: f64,
        y: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
    Reset,
    Mode {
        mode: OdomMode,
    },
}

impl ClientMsg {
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMsg = serde_json::from_str(text).map_err(|e| format!("bad message: {e}"))?;
        let finite = match &msg {
            ClientMsg::Teleop { v, w } => v.is_finite() && w.is_finite(),
            ClientMsg::Goal { x, y, theta } => x.is_finite() && y.is_finite() && theta.is_none_or(f64::is_finite),
            _ => true,
        };
        if finite {
            Ok(msg)
        } else {
            Err("bad message: numbers must be finite".into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Driver,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFrame {
    pub angle_min: f64,
    pub angle_inc: f64,
    pub range_max: f64,
    /// Readings above `range_max` are beams without a return.
    pub ranges: Vec<f64>,
}

impl ScanFrame {
    /// Every k-th beam, with k the smallest stride leaving at most `max_beams`.
    pub fn decimated(scan: &LidarScan, max_beams: usize) -> Self {
        let stride = scan.len().div_ceil(max_beams.max(1)).max(1);
        ScanFrame {
            angle_min: scan.angle_min,
            angle_inc: scan.angle_inc * stride as f64,
            range_max: scan.range_max,
            ranges: scan.ranges.iter().step_by(stride).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavStatus {
    pub goal: [f64; 2],
    /// `active` while driving, else the outcome.
    pub status: String,
    pub path: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMsg {
    /// First frame on every connection.
    Hello {
        role: Role,
        mode: OdomMode,
        /// World walls as [x0, y0, x1, y1].
        walls: Vec<[f64; 4]>,
    },
    State {
        t: f64,
        pose: Pose2,
        gt: Pose2,
        mode: OdomMode,
        scan: Option<ScanFrame>,
        particles: Vec<Pose2>,
        #[serde(skip_serializing_if = "Option::is_none")]
        nav: Option<NavStatus>,
    },
    Map {
        w: usize,
        h: usize,
        res: f64,
        origin: [f64; 2],
        /// Run-length pairs [value, count, ...] over rows from the bottom
        /// (minimum y) up, each row left to right.
        cells: Vec<u32>,
    },
    Error {
        message: String,
    },
}

impl ServerMsg {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server frames serialize")
    }

    pub fn map(grid: &OccupancyGrid) -> Self {
        let o = grid.origin();
        ServerMsg::Map {
            w: grid.width(),
            h: grid.height(),
            res: grid.resolution(),
            origin: [o.x, o.y],
            cells: rle_encode(grid.classes().map(cell_value)),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMsg::Error {
            message: message.into(),
        }
    }
}

pub fn cell_value(c: CellClass) -> u32 {
    match c {
        CellClass::Occupied => CELL_OCCUPIED,
        CellClass::Free => CELL_FREE,
        CellClass::Unknown => CELL_UNKNOWN,
    }
}

pub fn rle_encode(values: impl IntoIterator<Item = u32>) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    for v in values {
        match out.len() {
            n if n >= 2 && out[n - 2] == v => out[n - 1] += 1,
            _ => out.extend([v, 1]),
        }
    }
    out
}

/// Expands run-length pairs, checking the total against `expected`.
#[cfg(test)]
pub fn rle_decode(runs: &[u32], expected: usize) -> Result<Vec<u32>, String> {
    if runs.len() % 2 != 0 {
        return Err("run list has odd length".into());
    }
    let mut out = Vec::with_capacity(expected);
    for pair in runs.chunks(2) {
        if out.len() + pair[1] as usize > expected {
            return Err(format!("runs exceed {expected} cells"));
        }
        out.extend(std::iter::repeat_n(pair[0], pair[1] as usize));
    }
    if out.len() != expected {
        return Err(format!("runs cover {} of {expected} cells", out.len()));
    }
    Ok(out)
}

/// At most `max` poses, evenly strided.
pub fn decimate_poses(poses: &[Pose2], max: usize) -> Vec<Pose2> {
    let stride = poses.len().div_ceil(max.max(1)).max(1);
    poses.iter().step_by(stride).copied().collect()
}
