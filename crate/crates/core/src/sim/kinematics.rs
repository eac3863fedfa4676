use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, Twist2};

/// Differential-drive robot geometry and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    pub wheel_radius: f64,
    /// Axle track.
    pub wheel_base: f64,
    /// Radius of the collision disc.
    pub body_radius: f64,
    pub max_v: f64,
    pub max_w: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            wheel_radius: 0.05,
            wheel_base: 0.30,
            body_radius: 0.18,
            max_v: 0.5,
            max_w: 1.5,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.wheel_radius,
            self.wheel_base,
            self.body_radius,
            self.max_v,
            self.max_w,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err("robot parameters must be finite and strictly positive".into());
        }
        if self.body_radius < self.wheel_base / 2.0 {
            return Err("body_radius must cover half the wheel base".into());
        }
        Ok(())
    }
}

/// Closed-form unicycle integration over `dt` under a constant twist.
pub fn step_exact(pose: &Pose2, cmd: Twist2, dt: f64) -> Pose2 {
    debug_assert!(dt > 0.0);
    let th = pose.theta();
    if cmd.w.abs() < 1e-9 {
        let d = cmd.v * dt;
        Pose2::new(pose.x + d * th.cos(), pose.y + d * th.sin(), th + cmd.w * dt)
    } else {
        let r = cmd.v / cmd.w;
        let th1 = th + cmd.w * dt;
        Pose2::new(
            pose.x + r * (th1.sin() - th.sin()),
            pose.y - r * (th1.cos() - th.cos()),
            th1,
        )
    }
}

/// Wheel angular rates to body twist.
pub fn wheels_to_twist(w_left: f64, w_right: f64, params: &RobotParams) -> Twist2 {
    Twist2::new(
        params.wheel_radius * (w_left + w_right) / 2.0,
        params.wheel_radius * (w_right - w_left) / params.wheel_base,
    )
}
