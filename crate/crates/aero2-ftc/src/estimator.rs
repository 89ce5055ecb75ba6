//! Joint state-and-fault estimation: a discrete Kalman filter over the plant
//! state augmented with the per-rotor loss-of-effectiveness parameters.
//!
//! The multiplicative fault enters the discrete dynamics through
//! `N_k = -B_k diag(u_k)`, so the augmented transition matrix is rebuilt
//! every step from the commanded input. The fault block of the transition is
//! the identity (faults modeled constant); a small random-walk process noise
//! on the fault states keeps the filter able to track faults injected
//! mid-run.

use nalgebra::{Matrix4, Matrix4x2, Matrix4x6, Matrix6, Matrix6x2, Matrix6x4, Vector2, Vector4,
               Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DiscreteModel;

/// Process and measurement noise covariances for the augmented filter.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub q_a: Matrix6<f64>,
    pub r_a: Matrix4<f64>,
}

impl NoiseConfig {
    /// Diagonal covariances: `q_state` on the four plant states, `q_fault`
    /// on the two fault random-walk states, `r_meas` on the four
    /// measurements.
    pub fn diagonal(q_state: f64, q_fault: f64, r_meas: f64) -> Self {
        let mut q_a = Matrix6::zeros();
        for i in 0..4 {
            q_a[(i, i)] = q_state;
        }
        for i in 4..6 {
            q_a[(i, i)] = q_fault;
        }
        Self {
            q_a,
            r_a: Matrix4::identity() * r_meas,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::diagonal(1e-6, 1e-6, 1e-8)
    }
}

/// Scenario-facing estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub enabled: bool,
    pub q_state: f64,
    pub q_fault: f64,
    pub r_meas: f64,
    pub p0_state: f64,
    pub p0_fault: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            q_state: 1e-6,
            q_fault: 1e-6,
            r_meas: 1e-8,
            p0_state: 1e-3,
            p0_fault: 0.25,
        }
    }
}

impl EstimatorConfig {
    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig::diagonal(self.q_state, self.q_fault, self.r_meas)
    }
}

/// Augmented discrete model with blocks `[A_k, N_k; 0, I]`, `[B_k; 0]`,
/// `[C_k, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a_a: Matrix6<f64>,
    pub b_a: Matrix6x2<f64>,
    pub c_a: Matrix4x6<f64>,
    pub n_k: Matrix4x2<f64>,
}

/// Augmented estimate `[x_hat; gamma_hat]` with covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEstimate {
    pub x_a: Vector6<f64>,
    pub p_a: Matrix6<f64>,
}

impl AugmentedEstimate {
    /// Initial estimate: plant states from the first measurement, fault
    /// states at zero with a wide prior reflecting ignorance over [0, 1].
    pub fn initial(y0: Vector4<f64>, p0_state: f64, p0_fault: f64) -> Self {
        let mut x_a = Vector6::zeros();
        x_a.fixed_rows_mut::<4>(0).copy_from(&y0);
        let mut p_a = Matrix6::zeros();
        for i in 0..4 {
            p_a[(i, i)] = p0_state;
        }
        for i in 4..6 {
            p_a[(i, i)] = p0_fault;
        }
        Self { x_a, p_a }
    }

    pub fn state(&self) -> Vector4<f64> {
        self.x_a.fixed_rows::<4>(0).into()
    }

    /// Unclamped fault estimate, as carried by the filter.
    pub fn gamma_raw(&self) -> Vector2<f64> {
        self.x_a.fixed_rows::<2>(4).into()
    }

    /// Fault estimate clamped to [0, 1] for consumers; the filter state
    /// itself is never clamped.
    pub fn gamma_clamped(&self) -> Vector2<f64> {
        self.gamma_raw().map(|g| g.clamp(0.0, 1.0))
    }
}

/// Assemble the augmented model for one step, with `N_k` built from the
/// input actually sent to the actuators this step.
pub fn build_augmented(dm: &DiscreteModel, u_k: &Vector2<f64>) -> AugmentedModel {
    let n_k: Matrix4x2<f64> = -dm.b_k * nalgebra::Matrix2::from_diagonal(u_k);

    let mut a_a = Matrix6::zeros();
    a_a.fixed_view_mut::<4, 4>(0, 0).copy_from(&dm.a_k);
    a_a.fixed_view_mut::<4, 2>(0, 4).copy_from(&n_k);
    a_a.fixed_view_mut::<2, 2>(4, 4)
        .copy_from(&nalgebra::Matrix2::identity());

    let mut b_a = Matrix6x2::zeros();
    b_a.fixed_view_mut::<4, 2>(0, 0).copy_from(&dm.b_k);

    let mut c_a = Matrix4x6::zeros();
    c_a.fixed_view_mut::<4, 4>(0, 0).copy_from(&dm.c_k);

    AugmentedModel { a_a, b_a, c_a, n_k }
}

/// Time update: `x <- A_a x + B_a u`, `P <- A_a P A_a' + Q_a`.
pub fn predict(
    est: &AugmentedEstimate,
    am: &AugmentedModel,
    u_prev: &Vector2<f64>,
    q_a: &Matrix6<f64>,
) -> AugmentedEstimate {
    let x_a = am.a_a * est.x_a + am.b_a * u_prev;
    let p_a = am.a_a * est.p_a * am.a_a.transpose() + q_a;
    AugmentedEstimate {
        x_a,
        p_a: (p_a + p_a.transpose()) * 0.5,
    }
}

/// `K_a = P C' (C P C' + R)^-1` with the predicted covariance.
pub fn kalman_gain(
    p_pred: &Matrix6<f64>,
    c_a: &Matrix4x6<f64>,
    r_a: &Matrix4<f64>,
) -> Result<Matrix6x4<f64>> {
    let s = c_a * p_pred * c_a.transpose() + r_a;
    let s_inv = s.try_inverse().ok_or_else(|| {
        let sv = s.singular_values();
        let cond = sv.max() / sv.min().max(f64::MIN_POSITIVE);
        Error::Numerical(format!(
            "innovation covariance singular (condition estimate {cond:.3e})"
        ))
    })?;
    Ok(p_pred * c_a.transpose() * s_inv)
}

/// Measurement update: `x <- x + K (y - C x)`, `P <- P - K C P`,
/// re-symmetrized.
pub fn correct(
    est_pred: &AugmentedEstimate,
    k_a: &Matrix6x4<f64>,
    c_a: &Matrix4x6<f64>,
    y_k: &Vector4<f64>,
) -> AugmentedEstimate {
    let innovation = y_k - c_a * est_pred.x_a;
    let x_a = est_pred.x_a + k_a * innovation;
    let p_a = est_pred.p_a - k_a * c_a * est_pred.p_a;
    AugmentedEstimate {
        x_a,
        p_a: (p_a + p_a.transpose()) * 0.5,
    }
}

/// One full filter cycle: rebuild the augmented model from the previous
/// commanded input, predict across the sample interval, then correct with
/// the current measurement.
pub fn step(
    est: &AugmentedEstimate,
    dm: &DiscreteModel,
    u_prev: &Vector2<f64>,
    y_k: &Vector4<f64>,
    noise: &NoiseConfig,
) -> Result<AugmentedEstimate> {
    let am = build_augmented(dm, u_prev);
    let pred = predict(est, &am, u_prev, &noise.q_a);
    let gain = kalman_gain(&pred.p_a, &am.c_a, &noise.r_a)?;
    Ok(correct(&pred, &gain, &am.c_a, y_k))
}
