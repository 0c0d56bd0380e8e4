//! Unscented transform and the UKF predict/update step.

use nalgebra::{Cholesky, Matrix4, SMatrix, Vector4};

use super::{
    nsa_covariance, MotionModel, NoiseConfig, StateMatrix, StateVector, TrackState, UpdateMode,
    Measurement, STATE_DIM,
};
use crate::{Error, Result};

/// Sigma-point spread parameters.
#[derive(Debug, Clone, Copy)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UkfParams {
    fn lambda(&self) -> f64 {
        let n = STATE_DIM as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }

    fn weights(&self) -> (f64, f64, f64) {
        let n = STATE_DIM as f64;
        let lambda = self.lambda();
        let w0_mean = lambda / (n + lambda);
        let w0_cov = w0_mean + 1.0 - self.alpha * self.alpha + self.beta;
        let wi = 0.5 / (n + lambda);
        (w0_mean, w0_cov, wi)
    }
}

/// Symmetric sigma points around the state mean. On a Cholesky failure the
/// covariance gets a single 1e-9 jitter on the diagonal before the retry.
fn sigma_points(state: &TrackState, params: &UkfParams) -> Result<Vec<StateVector>> {
    let n = STATE_DIM as f64;
    let gamma_sq = n + params.lambda();
    if gamma_sq <= 0.0 {
        return Err(Error::numerical("non-positive sigma scaling n + lambda"));
    }
    let scaled = state.cov * gamma_sq;
    let root = match Cholesky::new(scaled).or_else(|| {
        // one jitter retry for PSD-but-singular covariances
        Cholesky::new((state.cov + StateMatrix::identity() * 1e-9) * gamma_sq)
    }) {
        Some(c) => c.l(),
        None => {
            return Err(Error::numerical(
                "covariance square root failed after jitter",
            ))
        }
    };
    let mut points = Vec::with_capacity(2 * STATE_DIM + 1);
    points.push(state.mean);
    for i in 0..STATE_DIM {
        let col = root.column(i).into_owned();
        points.push(state.mean + col);
        points.push(state.mean - col);
    }
    Ok(points)
}

/// Propagates a Gaussian through an arbitrary function by sigma-point
/// recombination. Returns the transformed mean and covariance.
pub fn unscented_transform<const D: usize>(
    state: &TrackState,
    params: &UkfParams,
    f: impl Fn(&StateVector) -> SMatrix<f64, D, 1>,
    additive_cov: Option<&SMatrix<f64, D, D>>,
) -> Result<(SMatrix<f64, D, 1>, SMatrix<f64, D, D>)> {
    let points = sigma_points(state, params)?;
    let (w0m, w0c, wi) = params.weights();
    let transformed: Vec<SMatrix<f64, D, 1>> = points.iter().map(&f).collect();

    let mut mean = transformed[0] * w0m;
    for t in transformed.iter().skip(1) {
        mean += t * wi;
    }
    let d0 = transformed[0] - mean;
    let mut cov = d0 * d0.transpose() * w0c;
    for t in transformed.iter().skip(1) {
        let d = t - mean;
        cov += d * d.transpose() * wi;
    }
    if let Some(q) = additive_cov {
        cov += q;
    }
    Ok((mean, cov))
}

/// Sigma-point prediction through the motion model.
pub fn ukf_predict(
    state: &TrackState,
    model: &MotionModel,
    noise: &NoiseConfig,
    params: &UkfParams,
) -> Result<TrackState> {
    if !state.is_finite() {
        return Err(Error::numerical("non-finite state in ukf_predict"));
    }
    let q = StateMatrix::from_diagonal(&noise.process_diag(state.height()));
    let (pred_mean, pred_cov) =
        unscented_transform(state, params, |x| model.apply(x), Some(&q))?;
    Ok(TrackState::new(pred_mean, super::symmetrize(&pred_cov)))
}

/// Sigma-point measurement update of a predicted state, with the same NSA
/// noise scaling as the linear filter.
pub fn ukf_update(
    predicted: &TrackState,
    z: &Measurement,
    confidence: f64,
    noise: &NoiseConfig,
    params: &UkfParams,
    mode: UpdateMode,
) -> Result<TrackState> {
    let r = Matrix4::from_diagonal(&noise.measurement_diag(predicted.height()));
    let r_eff = match mode {
        UpdateMode::Vanilla => r,
        UpdateMode::Nsa => nsa_covariance(&r, confidence)?,
    };

    let points = sigma_points(predicted, params)?;
    let (w0m, w0c, wi) = params.weights();
    let observe = |x: &StateVector| Vector4::new(x[0], x[1], x[2], x[3]);

    let observed: Vec<Vector4<f64>> = points.iter().map(observe).collect();
    let mut z_mean = observed[0] * w0m;
    for o in observed.iter().skip(1) {
        z_mean += o * wi;
    }
    let mut s = {
        let d0 = observed[0] - z_mean;
        d0 * d0.transpose() * w0c
    };
    let mut cross = {
        let dx0 = points[0] - predicted.mean;
        let dz0 = observed[0] - z_mean;
        dx0 * dz0.transpose() * w0c
    };
    for (p, o) in points.iter().zip(observed.iter()).skip(1) {
        let dz = o - z_mean;
        s += dz * dz.transpose() * wi;
        cross += (p - predicted.mean) * dz.transpose() * wi;
    }
    s += r_eff;

    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::numerical("singular innovation covariance in ukf_update"))?;
    let gain = cross * s_inv;
    let mean = predicted.mean + gain * (z - z_mean);
    let cov = super::symmetrize(&(predicted.cov - gain * s * gain.transpose()));
    Ok(TrackState::new(mean, cov))
}

/// One UKF step: sigma-point prediction through the motion model, then an
/// optional measurement update with NSA noise scaling.
pub fn ukf_step(
    state: &TrackState,
    model: &MotionModel,
    z: Option<&Measurement>,
    confidence: Option<f64>,
    noise: &NoiseConfig,
    params: &UkfParams,
    mode: UpdateMode,
) -> Result<TrackState> {
    let predicted = ukf_predict(state, model, noise, params)?;
    match z {
        Some(z) => ukf_update(&predicted, z, confidence.unwrap_or(0.0), noise, params, mode),
        None => Ok(predicted),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::predict;
    use approx::assert_relative_eq;

    fn zero_noise() -> NoiseConfig {
        NoiseConfig {
            process_base: [0.0; 8],
            ..NoiseConfig::default()
        }
    }

    fn sample_state() -> TrackState {
        let mean = StateVector::from_row_slice(&[3.0, -2.0, 0.9, 25.0, 1.5, -0.5, 0.01, 0.3]);
        let mut cov = StateMatrix::identity() * 0.8;
        cov[(0, 4)] = 0.1;
        cov[(4, 0)] = 0.1;
        TrackState::new(mean, cov)
    }

    #[test]
    fn ukf_matches_linear_prediction_mean() {
        let s = sample_state();
        let model = MotionModel::ConstantVelocity;
        let linear = predict(&s, &model, &zero_noise()).unwrap();
        let ukf = ukf_step(
            &s,
            &model,
            None,
            None,
            &zero_noise(),
            &UkfParams::default(),
            UpdateMode::Nsa,
        )
        .unwrap();
        for i in 0..8 {
            assert_relative_eq!(ukf.mean[i], linear.mean[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn ukf_covariance_matches_unscented_transform_of_prior() {
        // oracle: for the linear CV map the transform of the prior is F P Fᵀ
        let s = sample_state();
        let model = MotionModel::ConstantVelocity;
        let f = model.transition_matrix();
        let expected = f * s.cov * f.transpose();
        let ukf = ukf_step(
            &s,
            &model,
            None,
            None,
            &zero_noise(),
            &UkfParams::default(),
            UpdateMode::Nsa,
        )
        .unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(ukf.cov[(i, j)], expected[(i, j)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn ctrv_zero_turn_equals_cv_through_ukf() {
        let s = sample_state();
        let cv = ukf_step(
            &s,
            &MotionModel::ConstantVelocity,
            None,
            None,
            &zero_noise(),
            &UkfParams::default(),
            UpdateMode::Nsa,
        )
        .unwrap();
        let ctrv = ukf_step(
            &s,
            &MotionModel::ConstantTurnRate { omega: 0.0 },
            None,
            None,
            &zero_noise(),
            &UkfParams::default(),
            UpdateMode::Nsa,
        )
        .unwrap();
        for i in 0..8 {
            assert_relative_eq!(cv.mean[i], ctrv.mean[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn ukf_update_matches_linear_update() {
        // linear measurement model: UT update equals the Kalman update
        let s = sample_state();
        let z = Measurement::new(4.2, -1.5, 1.0, 26.0);
        let noise = zero_noise();
        let ukf = ukf_step(
            &s,
            &MotionModel::ConstantVelocity,
            Some(&z),
            Some(0.6),
            &noise,
            &UkfParams::default(),
            UpdateMode::Nsa,
        )
        .unwrap();
        let lin_pred = predict(&s, &MotionModel::ConstantVelocity, &noise).unwrap();
        let lin = crate::motion::update(&lin_pred, &z, 0.6, UpdateMode::Nsa, &noise).unwrap();
        for i in 0..8 {
            assert_relative_eq!(ukf.mean[i], lin.mean[i], epsilon = 1e-5);
        }
    }

    #[test]
    fn ukf_handles_singular_covariance_with_jitter() {
        // zero covariance fails a plain Cholesky; the jitter path must succeed
        let s = TrackState::new(
            StateVector::from_row_slice(&[1.0, 1.0, 1.0, 10.0, 0.5, 0.0, 0.0, 0.0]),
            StateMatrix::zeros(),
        );
        let out = ukf_step(
            &s,
            &MotionModel::ConstantVelocity,
            None,
            None,
            &zero_noise(),
            &UkfParams::default(),
            UpdateMode::Nsa,
        )
        .unwrap();
        assert_relative_eq!(out.mean[0], 1.5, epsilon = 1e-6);
    }
}
