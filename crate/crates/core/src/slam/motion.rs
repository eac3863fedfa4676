use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose2};
use crate::rng::gaussian;

/// Translations shorter than this carry no meaningful direction; the first
/// rotation is then taken as zero.
const MIN_TRANS: f64 = 1e-9;

/// Below this travel the split between the two rotations is dominated by
/// odometry jitter, so noise is drawn for the net rotation alone.
const SHORT_TRANS: f64 = 0.01;

/// Odometry increment decomposed as rotate, translate, rotate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomDelta {
    pub rot1: f64,
    pub trans: f64,
    pub rot2: f64,
}

impl OdomDelta {
    pub const ZERO: OdomDelta = OdomDelta {
        rot1: 0.0,
        trans: 0.0,
        rot2: 0.0,
    };

    /// Decomposition of the motion carrying `from` to `to`.
    pub fn from_poses(from: &Pose2, to: &Pose2) -> Self {
        let (dx, dy) = (to.x - from.x, to.y - from.y);
        let trans = dx.hypot(dy);
        let rot1 = if trans < MIN_TRANS {
            0.0
        } else {
            wrap_angle(dy.atan2(dx) - from.theta())
        };
        let rot2 = wrap_angle(to.theta() - from.theta() - rot1);
        Self { rot1, trans, rot2 }
    }

    /// Net heading change.
    pub fn rotation(&self) -> f64 {
        wrap_angle(self.rot1 + self.rot2)
    }

    pub fn apply(&self, prev: &Pose2) -> Pose2 {
        let heading = prev.theta() + self.rot1;
        Pose2::new(
            prev.x + self.trans * heading.cos(),
            prev.y + self.trans * heading.sin(),
            heading + self.rot2,
        )
    }

    /// Jacobians of [`apply`](Self::apply) with respect to the previous pose
    /// and to (rot1, trans, rot2).
    pub fn jacobians(&self, prev: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
        let heading = prev.theta() + self.rot1;
        let (s, c) = heading.sin_cos();
        let t = self.trans;
        #[rustfmt::skip]
        let j_pose = Matrix3::new(
            1.0, 0.0, -t * s,
            0.0, 1.0,  t * c,
            0.0, 0.0,  1.0,
        );
        #[rustfmt::skip]
        let j_ctrl = Matrix3::new(
            -t * s, c, 0.0,
             t * c, s, 0.0,
             1.0, 0.0, 1.0,
        );
        (j_pose, j_ctrl)
    }
}

/// Odometry noise mixing. `alpha1`: rotation noise from rotation, `alpha2`:
/// rotation from translation, `alpha3`: translation from translation, `alpha4`:
/// translation from rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionNoise {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            alpha1: 0.1,
            alpha2: 0.1,
            alpha3: 0.05,
            alpha4: 0.05,
        }
    }
}

impl MotionNoise {
    pub const NONE: MotionNoise = MotionNoise {
        alpha1: 0.0,
        alpha2: 0.0,
        alpha3: 0.0,
        alpha4: 0.0,
    };

    /// Variances of (rot1, trans, rot2).
    pub fn variances(&self, d: &OdomDelta) -> (f64, f64, f64) {
        // Reversing shows up as rot1 ≈ ±pi; measure the first rotation against
        // whichever of forward or backward travel is closer.
        let r1 = d.rot1.abs().min(wrap_angle(d.rot1 - std::f64::consts::PI).abs());
        let (r1, r2) = if d.trans < SHORT_TRANS { (0.0, d.rotation()) } else { (r1, d.rot2) };
        let t = d.trans;
        (
            self.alpha1 * r1 * r1 + self.alpha2 * t * t,
            self.alpha3 * t * t + self.alpha4 * (r1 * r1 + r2 * r2),
            self.alpha1 * r2 * r2 + self.alpha2 * t * t,
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        let a = [self.alpha1, self.alpha2, self.alpha3, self.alpha4];
        if a.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err(format!("odometry alphas must be finite and nonnegative, got {a:?}"))
        }
    }
}

/// Draws a successor of `prev` under the odometry motion model. Always consumes
/// three normal draws.
pub fn sample_odometry_motion<R: Rng + ?Sized>(
    prev: &Pose2,
    delta: &OdomDelta,
    noise: &MotionNoise,
    rng: &mut R,
) -> Pose2 {
    let (v1, vt, v2) = noise.variances(delta);
    let noisy = OdomDelta {
        rot1: delta.rot1 - gaussian(rng, v1.sqrt()),
        trans: delta.trans - gaussian(rng, vt.sqrt()),
        rot2: delta.rot2 - gaussian(rng, v2.sqrt()),
    };
    noisy.apply(prev)
}
