use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{is_valid_covariance, wrap_angle, Pose2};

pub type Vector5 = SVector<f64, 5>;
pub type Matrix5 = SMatrix<f64, 5, 5>;

const TH: usize = 2;
const V: usize = 3;
const W: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("innovation covariance is not positive definite")]
    InnovationNotPd,
    #[error("measurement at {z} precedes filter time {state}")]
    Stale { z: f64, state: f64 },
    #[error("measurement noise must be symmetric positive definite")]
    BadNoise,
    #[error("pose delta needs a positive interval, got {0}")]
    BadInterval(f64),
}

/// Pose plus body velocities with a joint covariance over (x, y, θ, v, w).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub w: f64,
    pub cov: Matrix5,
    pub stamp: f64,
}

impl FusedState {
    pub fn new(pose: Pose2, stamp: f64, cov: Matrix5) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: pose.theta(),
            v: 0.0,
            w: 0.0,
            cov,
            stamp,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.theta)
    }

    pub fn vector(&self) -> Vector5 {
        Vector5::new(self.x, self.y, self.theta, self.v, self.w)
    }

    fn with_vector(&self, s: &Vector5) -> Self {
        Self {
            x: s[0],
            y: s[1],
            theta: wrap_angle(s[2]),
            v: s[3],
            w: s[4],
            ..*self
        }
    }

    pub fn cov_is_valid(&self) -> bool {
        is_valid_covariance(&self.cov, 1e-9)
    }
}

/// Random-walk strengths of the velocity states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessNoise {
    /// (m/s²)²·s per second of prediction.
    pub q_accel: f64,
    /// (rad/s²)²·s per second of prediction.
    pub q_alpha: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            q_accel: 0.5,
            q_alpha: 2.0,
        }
    }
}

/// Constant-velocity unicycle propagation of the state vector.
pub fn propagate(s: &Vector5, dt: f64) -> Vector5 {
    let (sn, cs) = s[TH].sin_cos();
    Vector5::new(
        s[0] + s[V] * cs * dt,
        s[1] + s[V] * sn * dt,
        wrap_angle(s[TH] + s[W] * dt),
        s[V],
        s[W],
    )
}

/// Jacobian of [`propagate`] with respect to the state.
pub fn predict_jacobian(s: &Vector5, dt: f64) -> Matrix5 {
    let (sn, cs) = s[TH].sin_cos();
    let mut f = Matrix5::identity();
    f[(0, TH)] = -s[V] * sn * dt;
    f[(0, V)] = cs * dt;
    f[(1, TH)] = s[V] * cs * dt;
    f[(1, V)] = sn * dt;
    f[(TH, W)] = dt;
    f
}

pub fn ekf_predict(s: &FusedState, dt: f64, q: &ProcessNoise) -> FusedState {
    assert!(dt >= 0.0, "negative prediction interval {dt}");
    if dt == 0.0 {
        return *s;
    }
    let x = s.vector();
    let f = predict_jacobian(&x, dt);
    let mut cov = f * s.cov * f.transpose();
    cov[(V, V)] += q.q_accel * dt;
    cov[(W, W)] += q.q_alpha * dt;
    let mut out = s.with_vector(&propagate(&x, dt));
    out.cov = symmetrize(&cov);
    out.stamp = s.stamp + dt;
    out
}

/// Measurement payloads with their noise covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementKind {
    Gyro { w: f64, var: f64 },
    WheelOdom { v: f64, w: f64, r: Matrix2<f64> },
    /// Body-frame displacement over `dt` seconds starting at the measurement stamp.
    PoseDelta {
        dx: f64,
        dy: f64,
        dtheta: f64,
        dt: f64,
        r: Matrix3<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub stamp: f64,
}

/// Innovation and its covariance, dimension 1 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

/// Predicted measurement and its Jacobian for an M-dimensional model.
pub fn measurement_model<const M: usize>(
    kind: &MeasurementKind,
    s: &Vector5,
) -> (SVector<f64, M>, SMatrix<f64, M, 5>) {
    let mut h = SVector::<f64, M>::zeros();
    let mut jac = SMatrix::<f64, M, 5>::zeros();
    match *kind {
        MeasurementKind::Gyro { .. } => {
            h[0] = s[W];
            jac[(0, W)] = 1.0;
        }
        MeasurementKind::WheelOdom { .. } => {
            h[0] = s[V];
            h[1] = s[W];
            jac[(0, V)] = 1.0;
            jac[(1, W)] = 1.0;
        }
        MeasurementKind::PoseDelta { dt, .. } => {
            h[0] = s[V] * dt;
            h[2] = s[W] * dt;
            jac[(0, V)] = dt;
            jac[(2, W)] = dt;
        }
    }
    (h, jac)
}

fn symmetrize(m: &Matrix5) -> Matrix5 {
    (m + m.transpose()) * 0.5
}

fn update_n<const M: usize>(
    st: &FusedState,
    kind: &MeasurementKind,
    z: SVector<f64, M>,
    r: SMatrix<f64, M, M>,
    angle_row: Option<usize>,
) -> Result<(FusedState, Innovation), EkfError> {
    if (r - r.transpose()).abs().max() > 1e-12 || r.cholesky().is_none() {
        return Err(EkfError::BadNoise);
    }
    let x = st.vector();
    let (h, jac) = measurement_model::<M>(kind, &x);
    let mut y = z - h;
    if let Some(k) = angle_row {
        y[k] = wrap_angle(y[k]);
    }
    let s = jac * st.cov * jac.transpose() + r;
    let s = (s + s.transpose()) * 0.5;
    let chol = s.cholesky().ok_or(EkfError::InnovationNotPd)?;
    // K = P Hᵀ S⁻¹, solved rather than inverted.
    let k = chol.solve(&(jac * st.cov)).transpose();
    let mut dx = k * y;
    dx[TH] = wrap_angle(dx[TH]);
    let mut xn = x + dx;
    xn[TH] = wrap_angle(xn[TH]);
    let ikh = Matrix5::identity() - k * jac;
    let cov = ikh * st.cov * ikh.transpose() + k * r * k.transpose();
    let mut out = st.with_vector(&xn);
    out.cov = symmetrize(&cov);
    Ok((
        out,
        Innovation {
            y: y.iter().copied().collect(),
            s: s.iter().copied().collect(),
        },
    ))
}

/// Standard EKF correction with a Joseph-form covariance update. On error the
/// caller keeps its previous state.
pub fn ekf_update(s: &FusedState, z: &Measurement) -> Result<(FusedState, Innovation), EkfError> {
    if z.stamp < s.stamp - 1e-9 {
        return Err(EkfError::Stale {
            z: z.stamp,
            state: s.stamp,
        });
    }
    match z.kind {
        MeasurementKind::Gyro { w, var } => update_n::<1>(
            s,
            &z.kind,
            SVector::<f64, 1>::new(w),
            SMatrix::<f64, 1, 1>::new(var),
            None,
        ),
        MeasurementKind::WheelOdom { v, w, r } => update_n::<2>(s, &z.kind, Vector2::new(v, w), r, None),
        MeasurementKind::PoseDelta {
            dx,
            dy,
            dtheta,
            dt,
            r,
        } => {
            if !(dt > 0.0) {
                return Err(EkfError::BadInterval(dt));
            }
            update_n::<3>(s, &z.kind, Vector3::new(dx, dy, dtheta), r, Some(2))
        }
    }
}
