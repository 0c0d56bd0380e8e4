//! State estimation over (cx, cy, a, h) plus velocities: a linear Kalman
//! filter, the noise-scale-adaptive (NSA) update variant, and an unscented
//! filter for configurable motion models.
//!
//! The NSA update scales the measurement noise covariance by one minus the
//! detection confidence, so high-confidence detections correct the state
//! harder than uncertain ones.

mod ukf;

pub use ukf::{ukf_predict, ukf_step, ukf_update, unscented_transform, UkfParams};

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};

use crate::model::BBox;
use crate::{Error, Result};

/// Dimension of the full state: (cx, cy, a, h) and their velocities.
pub const STATE_DIM: usize = 8;
/// Dimension of the measurement: (cx, cy, a, h).
pub const MEAS_DIM: usize = 4;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Measurement = Vector4<f64>;

/// Gaussian track state: mean over the 8-dimensional state and its
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

impl TrackState {
    pub fn new(mean: StateVector, cov: StateMatrix) -> Self {
        TrackState { mean, cov }
    }

    /// Initial state from a measurement, with zero velocities and a
    /// height-scaled diagonal covariance.
    pub fn from_measurement(z: &Measurement, noise: &NoiseConfig) -> Self {
        let mut mean = StateVector::zeros();
        for i in 0..MEAS_DIM {
            mean[i] = z[i];
        }
        let h = z[3];
        let p = noise.position_std_factor;
        let v = noise.velocity_std_factor;
        let std = [
            2.0 * p * h,
            2.0 * p * h,
            1e-2,
            2.0 * p * h,
            10.0 * v * h,
            10.0 * v * h,
            1e-5,
            10.0 * v * h,
        ];
        let mut cov = StateMatrix::zeros();
        for i in 0..STATE_DIM {
            cov[(i, i)] = std[i] * std[i];
        }
        TrackState { mean, cov }
    }

    pub fn height(&self) -> f64 {
        self.mean[3]
    }

    /// Projects the state mean back to a box. Sizes are clamped to stay
    /// positive.
    pub fn to_bbox(&self) -> Result<BBox> {
        let a = self.mean[2].max(1e-6);
        let h = self.mean[3].max(1e-6);
        BBox::from_cyah(&[self.mean[0], self.mean[1], a, h])
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov.iter().all(|v| v.is_finite())
    }
}

/// Measurement and process noise configuration. The base diagonals are
/// multipliers on the height-proportional standard deviations, so zeroing
/// `process_base` removes process noise entirely.
#[derive(Debug, Clone)]
pub struct NoiseConfig {
    /// Diagonal multipliers for the 4x4 measurement noise covariance.
    pub measurement_base: [f64; 4],
    /// Diagonal multipliers for the 8x8 process noise covariance.
    pub process_base: [f64; 8],
    /// Position std as a fraction of box height.
    pub position_std_factor: f64,
    /// Velocity std as a fraction of box height.
    pub velocity_std_factor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            measurement_base: [1.0; 4],
            process_base: [1.0; 8],
            position_std_factor: 1.0 / 20.0,
            velocity_std_factor: 1.0 / 160.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.measurement_base.iter().all(|v| *v >= 0.0)
            && self.process_base.iter().all(|v| *v >= 0.0)
            && self.position_std_factor > 0.0
            && self.velocity_std_factor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::input("noise configuration has negative entries"))
        }
    }

    /// Measurement noise diagonal for a track of height `h`.
    pub fn measurement_diag(&self, h: f64) -> Vector4<f64> {
        let p = self.position_std_factor;
        let std = [p * h, p * h, 1e-1, p * h];
        Vector4::from_fn(|i, _| self.measurement_base[i] * std[i] * std[i])
    }

    /// Process noise diagonal for a track of height `h`.
    pub fn process_diag(&self, h: f64) -> StateVector {
        let p = self.position_std_factor;
        let v = self.velocity_std_factor;
        let std = [p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h];
        StateVector::from_fn(|i, _| self.process_base[i] * std[i] * std[i])
    }
}

/// Per-frame motion hypothesis. Both variants are applied with a fixed
/// one-frame time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionModel {
    ConstantVelocity,
    /// Constant turn rate (radians per frame) applied to the planar velocity;
    /// aspect and height evolve as constant velocity.
    ConstantTurnRate {
        omega: f64,
    },
}

impl MotionModel {
    /// One-frame transition matrix. The turn-rate model rotates the planar
    /// velocity and integrates the arc for the position.
    pub fn transition_matrix(&self) -> StateMatrix {
        let mut f = StateMatrix::identity();
        match *self {
            MotionModel::ConstantVelocity => {
                for i in 0..MEAS_DIM {
                    f[(i, i + 4)] = 1.0;
                }
            }
            MotionModel::ConstantTurnRate { omega } if omega.abs() < 1e-12 => {
                for i in 0..MEAS_DIM {
                    f[(i, i + 4)] = 1.0;
                }
            }
            MotionModel::ConstantTurnRate { omega } => {
                let (s, c) = (omega.sin(), omega.cos());
                // integral of the rotation over one frame
                f[(0, 4)] = s / omega;
                f[(0, 5)] = -(1.0 - c) / omega;
                f[(1, 4)] = (1.0 - c) / omega;
                f[(1, 5)] = s / omega;
                f[(2, 6)] = 1.0;
                f[(3, 7)] = 1.0;
                // rotated velocity
                f[(4, 4)] = c;
                f[(4, 5)] = -s;
                f[(5, 4)] = s;
                f[(5, 5)] = c;
            }
        }
        f
    }

    pub fn apply(&self, x: &StateVector) -> StateVector {
        self.transition_matrix() * x
    }
}

/// Propagates a state one frame forward: mean through the motion model,
/// covariance as F P Fᵀ + Q.
pub fn predict(state: &TrackState, model: &MotionModel, noise: &NoiseConfig) -> Result<TrackState> {
    if !state.is_finite() {
        return Err(Error::numerical("non-finite state in predict"));
    }
    let f = model.transition_matrix();
    let mean = f * state.mean;
    let q = StateMatrix::from_diagonal(&noise.process_diag(state.height()));
    let cov = symmetrize(&(f * state.cov * f.transpose() + q));
    Ok(TrackState { mean, cov })
}

/// Confidence-scaled measurement noise: (1 - c) R.
pub fn nsa_covariance(base: &Matrix4<f64>, confidence: f64) -> Result<Matrix4<f64>> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::input(format!(
            "confidence {confidence} outside [0, 1]"
        )));
    }
    Ok(base * (1.0 - confidence))
}

/// Measurement update mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Constant measurement noise.
    Vanilla,
    /// Noise scaled by (1 - confidence).
    Nsa,
}

fn measurement_matrix() -> SMatrix<f64, MEAS_DIM, STATE_DIM> {
    let mut h = SMatrix::<f64, MEAS_DIM, STATE_DIM>::zeros();
    for i in 0..MEAS_DIM {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

/// Kalman correction with an explicit measurement noise diagonal. In NSA
/// mode the noise is first scaled by (1 - confidence).
pub fn update_with_noise(
    state: &TrackState,
    z: &Measurement,
    r_diag: &Vector4<f64>,
    confidence: f64,
    mode: UpdateMode,
) -> Result<TrackState> {
    let r = Matrix4::from_diagonal(r_diag);
    let r_eff = match mode {
        UpdateMode::Vanilla => r,
        UpdateMode::Nsa => nsa_covariance(&r, confidence)?,
    };
    let h = measurement_matrix();
    let s = h * state.cov * h.transpose() + r_eff;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::numerical("singular innovation covariance"))?;
    let gain = state.cov * h.transpose() * s_inv;
    let innovation = z - h * state.mean;
    let mean = state.mean + gain * innovation;
    // P - K S Kᵀ is algebraically (I - KH) P and symmetric by construction
    let cov = symmetrize(&(state.cov - gain * s * gain.transpose()));
    Ok(TrackState { mean, cov })
}

/// Kalman correction with the configured height-scaled measurement noise.
pub fn update(
    state: &TrackState,
    z: &Measurement,
    confidence: f64,
    mode: UpdateMode,
    noise: &NoiseConfig,
) -> Result<TrackState> {
    let r_diag = noise.measurement_diag(state.height());
    update_with_noise(state, z, &r_diag, confidence, mode)
}

/// Squared Mahalanobis distance of a measurement under the predicted state,
/// with an explicit measurement noise diagonal.
pub fn gating_distance_with_noise(
    state: &TrackState,
    z: &Measurement,
    r_diag: &Vector4<f64>,
) -> Result<f64> {
    let h = measurement_matrix();
    let s = h * state.cov * h.transpose() + Matrix4::from_diagonal(r_diag);
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::numerical("singular innovation covariance in gating"))?;
    let residual = z - h * state.mean;
    Ok((residual.transpose() * s_inv * residual)[(0, 0)])
}

/// Squared Mahalanobis distance with the configured measurement noise.
pub fn gating_distance(state: &TrackState, z: &Measurement, noise: &NoiseConfig) -> Result<f64> {
    gating_distance_with_noise(state, z, &noise.measurement_diag(state.height()))
}

/// Chi-square 0.95 quantile for 4 degrees of freedom; the conventional gate
/// on the squared Mahalanobis distance of a 4-dimensional measurement.
pub const CHI2_GATE_4DOF: f64 = 9.4877;
