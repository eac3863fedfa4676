//! Planar rigid-body poses, velocity twists and angle arithmetic.
//!
//! World axes are x right, y up, heading counterclockwise from +x. Every
//! quantity is SI. Headings are kept in the half-open interval (-pi, pi].

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    debug_assert!(a.is_finite(), "wrap_angle on non-finite input");
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A point in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Planar pose: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl From<[f64; 3]> for Pose2 {
    fn from(v: [f64; 3]) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = wrap_angle(theta);
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// `self ⊕ other`: `other` expressed in this pose's frame, mapped to the world.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Relative pose `self⁻¹ ⊕ other`, so that `self.compose(&self.between(b)) == b`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }

    /// Maps a point from this pose's body frame into the world frame.
    pub fn transform_point(&self, q: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.x + c * q.x - s * q.y, self.y + s * q.x + c * q.y)
    }

    pub fn translation_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Free functions mirroring the pose methods; handy in iterator chains.
pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn between(a: &Pose2, b: &Pose2) -> Pose2 {
    a.between(b)
}

pub fn transform_point(p: &Pose2, q: Point2) -> Point2 {
    p.transform_point(q)
}

/// Body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2 {
    /// Forward speed, m/s.
    pub v: f64,
    /// Counterclockwise yaw rate, rad/s.
    pub w: f64,
}

impl Twist2 {
    pub const ZERO: Twist2 = Twist2 { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn clamped(&self, max_v: f64, max_w: f64) -> Twist2 {
        Twist2::new(self.v.clamp(-max_v, max_v), self.w.clamp(-max_w, max_w))
    }

    pub fn scaled(&self, k: f64) -> Twist2 {
        Twist2::new(self.v * k, self.w * k)
    }
}

/// Covariance over (x, y, theta).
pub type Cov3 = Matrix3<f64>;

/// Symmetric and PSD within the given tolerance.
pub fn is_valid_covariance<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>, tol: f64) -> bool {
    if (m - m.transpose()).abs().max() > tol {
        return false;
    }
    let sym = nalgebra::DMatrix::from_fn(N, N, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    sym.symmetric_eigenvalues().iter().all(|&e| e >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol
            && (a.y - b.y).abs() <= tol
            && wrap_angle(a.theta() - b.theta()).abs() <= tol
    }

    #[test]
    fn wrap_angle_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!(wrap_angle(-PI + 1e-9) < 0.0);
    }

    #[test]
    fn compose_examples() {
        let p = Pose2::identity().compose(&Pose2::new(2.0, 3.0, 0.5));
        assert!(close(&p, &Pose2::new(2.0, 3.0, 0.5), 1e-15));
        let q = Pose2::new(1.0, 0.0, FRAC_PI_2).compose(&Pose2::new(1.0, 0.0, 0.0));
        assert!(close(&q, &Pose2::new(1.0, 1.0, FRAC_PI_2), 1e-15));
    }

    #[test]
    fn between_examples() {
        let p = Pose2::new(0.3, -1.2, 2.0);
        assert!(close(&p.between(&p), &Pose2::identity(), 1e-15));
        assert!(close(&Pose2::identity().between(&p), &p, 1e-15));
        let d = Pose2::new(1.0, 1.0, FRAC_PI_2).between(&Pose2::new(1.0, 2.0, FRAC_PI_2));
        assert!(close(&d, &Pose2::new(1.0, 0.0, 0.0), 1e-15));
    }

    #[test]
    fn transform_point_examples() {
        let q = Pose2::identity().transform_point(Point2::new(3.0, 4.0));
        assert_eq!(q, Point2::new(3.0, 4.0));
        let q = Pose2::new(0.0, 0.0, PI).transform_point(Point2::new(1.0, 0.0));
        assert_abs_diff_eq!(q.x, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-15);
        let q = Pose2::new(1.0, 0.0, FRAC_PI_2).transform_point(Point2::new(1.0, 0.0));
        assert_abs_diff_eq!(q.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pose_serializes_as_triple() {
        let p = Pose2::new(1.0, 2.0, 0.5);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1.0,2.0,0.5]");
        let back: Pose2 = serde_json::from_str("[1.0,2.0,7.0]").unwrap();
        assert_abs_diff_eq!(back.theta(), wrap_angle(7.0));
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-50.0..50.0f64, -50.0..50.0f64, -10.0..10.0f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn compose_with_inverse_is_identity(a in pose()) {
            prop_assert!(close(&a.compose(&a.inverse()), &Pose2::identity(), 1e-12));
        }

        #[test]
        fn compose_between_roundtrip(a in pose(), b in pose()) {
            prop_assert!(close(&a.compose(&a.between(&b)), &b, 1e-12));
        }

        #[test]
        fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(close(&l, &r, 1e-9));
        }

        #[test]
        fn wrap_is_idempotent_and_in_range(a in -1e4..1e4f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w), w);
            prop_assert!(((a - w) / TAU - ((a - w) / TAU).round()).abs() < 1e-9);
        }

        #[test]
        fn theta_always_wrapped(a in pose(), b in pose()) {
            for p in [a.compose(&b), a.between(&b), a.inverse()] {
                prop_assert!(p.theta() > -PI && p.theta() <= PI);
            }
        }

        #[test]
        fn transform_is_isometry(p in pose(), ax in -10.0..10.0f64, ay in -10.0..10.0f64,
                                 bx in -10.0..10.0f64, by in -10.0..10.0f64) {
            let a = Point2::new(ax, ay);
            let b = Point2::new(bx, by);
            let d0 = a.distance(&b);
            let d1 = p.transform_point(a).distance(&p.transform_point(b));
            prop_assert!((d0 - d1).abs() <= 1e-12);
        }
    }
}
