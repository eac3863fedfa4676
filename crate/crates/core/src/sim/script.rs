//! Scripted driving: fixed twists for a duration, or waypoints followed with a
//! turn-then-drive controller that steers on ground truth (a stand-in for a
//! careful human operator).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::geometry::{wrap_angle, Point2, Pose2, Twist2};
use crate::log::Record;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptSegment {
    Waypoints {
        waypoints: Vec<[f64; 2]>,
    },
    Twist {
        v: f64,
        w: f64,
        /// Seconds.
        duration: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandScript {
    pub segments: Vec<ScriptSegment>,
}

impl CommandScript {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let s: CommandScript = serde_json::from_str(text).map_err(|e| format!("bad command script: {e}"))?;
        for seg in &s.segments {
            if let ScriptSegment::Twist { duration, .. } = seg {
                if !(*duration >= 0.0 && duration.is_finite()) {
                    return Err("twist segment duration must be a nonnegative number".into());
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverConfig {
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Turn in place while the bearing error exceeds this, radians.
    pub turn_threshold: f64,
    /// Proportional gain on bearing error.
    pub heading_gain: f64,
    pub max_turn_rate: f64,
    /// Waypoint capture radius, meters.
    pub tolerance: f64,
    /// Give up on a waypoint after this long, seconds.
    pub waypoint_timeout: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            speed: 0.3,
            turn_threshold: 0.2,
            heading_gain: 2.0,
            max_turn_rate: 1.0,
            tolerance: 0.05,
            waypoint_timeout: 30.0,
        }
    }
}

/// Turn-then-drive command toward `target`.
pub fn waypoint_command(pose: &Pose2, target: Point2, cfg: &DriverConfig) -> Twist2 {
    let (dx, dy) = (target.x - pose.x, target.y - pose.y);
    let dist = dx.hypot(dy);
    let alpha = wrap_angle(dy.atan2(dx) - pose.theta());
    let w = (cfg.heading_gain * alpha).clamp(-cfg.max_turn_rate, cfg.max_turn_rate);
    if alpha.abs() > cfg.turn_threshold {
        return Twist2::new(0.0, w);
    }
    // Slow down over the last 10 cm so the capture radius is not overshot.
    Twist2::new(cfg.speed * (dist / 0.1).min(1.0), w)
}

/// Outcome of running a script.
#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub records: Vec<Record>,
    /// Waypoints abandoned after the timeout.
    pub missed: usize,
    /// Steps on which the robot touched a wall.
    pub collisions: usize,
}

/// Runs `script` on `sim` from its current state. The returned log starts with
/// the simulator's initial records.
pub fn run_script(sim: &mut Simulator, script: &CommandScript, cfg: &DriverConfig) -> ScriptRun {
    let dt = sim.config().dt;
    let mut records = sim.initial_records();
    let mut missed = 0;
    let mut collisions = 0;
    let mut step = |sim: &mut Simulator, cmd: Twist2, records: &mut Vec<Record>| {
        records.extend(sim.step(cmd));
        collisions += usize::from(sim.state().collision);
    };
    for seg in &script.segments {
        match seg {
            ScriptSegment::Twist { v, w, duration } => {
                let steps = (duration / dt - 1e-9).ceil().max(0.0) as u64;
                for _ in 0..steps {
                    step(sim, Twist2::new(*v, *w), &mut records);
                }
            }
            ScriptSegment::Waypoints { waypoints } => {
                let budget = (cfg.waypoint_timeout / dt).ceil() as u64;
                for wp in waypoints {
                    let target = Point2::new(wp[0], wp[1]);
                    let mut reached = false;
                    for _ in 0..budget {
                        let pose = sim.state().true_pose;
                        if pose.position().distance(&target) <= cfg.tolerance {
                            reached = true;
                            break;
                        }
                        step(sim, waypoint_command(&pose, target, cfg), &mut records);
                    }
                    if !reached {
                        missed += 1;
                    }
                }
            }
        }
    }
    ScriptRun {
        records,
        missed,
        collisions,
    }
}

/// Re-drives `sim` with the `cmd` records of a log, one simulator step per
/// record. With the seed and config of the original run the output log
/// reproduces it.
pub fn replay_commands(sim: &mut Simulator, log: &[Record]) -> Vec<Record> {
    let mut records = sim.initial_records();
    for cmd in log.iter().filter_map(Record::as_cmd) {
        records.extend(sim.step(cmd));
    }
    records
}
