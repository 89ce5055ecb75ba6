//! Plant model of the 2DOF bi-rotor helicopter: physical parameters,
//! continuous LTI state-space form, multiplicative actuator faults, and
//! zero-order-hold discretization.
//!
//! State ordering is `X = [theta, psi, theta_dot, psi_dot]` (pitch angle, yaw
//! angle, and their rates, radians / rad/s). Input ordering is
//! `U = [V_p, V_y]` (front and back motor voltages).

use nalgebra::{DMatrix, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the rig.
///
/// Defaults are the bench-identified values; note they are not perfectly
/// consistent with the canonical state-space matrices of [`ContinuousModel::canonical`]
/// (the two were measured separately), so models built from these parameters
/// via [`build_continuous_model`] differ slightly from the canonical blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalParams {
    /// Distance between pivot and rotor centers (m).
    pub d_t: f64,
    /// Thrust gain on the pitch axis from the front rotor (N/V).
    pub k_pp: f64,
    /// Cross thrust gain on the pitch axis from the back rotor (N/V).
    pub k_py: f64,
    /// Thrust gain on the yaw axis from the back rotor (N/V).
    pub k_yy: f64,
    /// Cross thrust gain on the yaw axis from the front rotor (N/V).
    pub k_yp: f64,
    /// Pitch stiffness.
    pub k_sp: f64,
    /// Pitch damping.
    pub d_p: f64,
    /// Yaw damping.
    pub d_y: f64,
    /// Pitch moment of inertia (kg m^2).
    pub j_p: f64,
    /// Yaw moment of inertia (kg m^2).
    pub j_y: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            d_t: 0.1674,
            k_pp: 0.00321,
            k_py: 0.00137,
            k_yy: 0.00610,
            k_yp: -0.00319,
            k_sp: 0.00744,
            d_p: 0.00199,
            d_y: 0.00192,
            j_p: 0.0232,
            j_y: 0.0238,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if self.j_p <= 0.0 || self.j_y <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inertias must be positive (j_p = {}, j_y = {})",
                self.j_p, self.j_y
            )));
        }
        if self.d_t <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "moment arm d_t must be positive (got {})",
                self.d_t
            )));
        }
        Ok(())
    }
}

/// Default input saturation bound (V). The rig's amplifiers clip somewhere;
/// this bound is configurable per scenario.
pub const DEFAULT_U_LIMIT: f64 = 24.0;

/// Continuous LTI plant `x_dot = A x + B u`, `y = C x` with input saturation
/// limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub c: Matrix4<f64>,
    pub u_min: f64,
    pub u_max: f64,
}

impl ContinuousModel {
    /// The canonical numeric model. These blocks are what the controller and
    /// the fault-accommodation results were produced with; they differ
    /// slightly from matrices recomputed from [`PhysicalParams`] defaults.
    pub fn canonical() -> Self {
        #[rustfmt::skip]
        let a = Matrix4::new(
            0.0,     0.0, 1.0,     0.0,
            0.0,     0.0, 0.0,     1.0,
            -0.3190, 0.0, -0.1164, 0.0,
            0.0,     0.0, 0.0,     -0.1386,
        );
        #[rustfmt::skip]
        let b = Matrix4x2::new(
            0.0,      0.0,
            0.0,      0.0,
            0.0216,   0.01154,
            -0.01336, 0.052,
        );
        Self {
            a,
            b,
            c: Matrix4::identity(),
            u_min: -DEFAULT_U_LIMIT,
            u_max: DEFAULT_U_LIMIT,
        }
    }

    /// Clamp an input vector to the saturation limits, reporting which
    /// channels clipped.
    pub fn saturate(&self, u: Vector2<f64>) -> (Vector2<f64>, [bool; 2]) {
        let mut out = u;
        let mut clipped = [false; 2];
        for i in 0..2 {
            if u[i] > self.u_max {
                out[i] = self.u_max;
                clipped[i] = true;
            } else if u[i] < self.u_min {
                out[i] = self.u_min;
                clipped[i] = true;
            }
        }
        (out, clipped)
    }
}

/// Assemble the continuous model from physical parameters.
pub fn build_continuous_model(params: &PhysicalParams) -> Result<ContinuousModel> {
    params.validate()?;
    let mut a = Matrix4::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    a[(2, 0)] = -params.k_sp / params.j_p;
    a[(2, 2)] = -params.d_p / params.j_p;
    a[(3, 3)] = -params.d_y / params.j_y;

    let mut b = Matrix4x2::zeros();
    b[(2, 0)] = params.k_pp * params.d_t / params.j_p;
    b[(2, 1)] = params.k_py * params.d_t / params.j_p;
    b[(3, 0)] = params.k_yp * params.d_t / params.j_y;
    b[(3, 1)] = params.k_yy * params.d_t / params.j_y;

    Ok(ContinuousModel {
        a,
        b,
        c: Matrix4::identity(),
        u_min: -DEFAULT_U_LIMIT,
        u_max: DEFAULT_U_LIMIT,
    })
}

/// Per-rotor loss-of-effectiveness parameters. `gamma_i = 0` is a fully
/// healthy actuator, `gamma_i = 1` a total failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct FaultVector {
    gamma: Vector2<f64>,
}

impl FaultVector {
    pub fn new(gamma0: f64, gamma1: f64) -> Result<Self> {
        for (i, g) in [gamma0, gamma1].into_iter().enumerate() {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Domain(format!(
                    "fault parameter gamma_{i} = {g} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            gamma: Vector2::new(gamma0, gamma1),
        })
    }

    pub fn healthy() -> Self {
        Self {
            gamma: Vector2::zeros(),
        }
    }

    pub fn gamma(&self) -> Vector2<f64> {
        self.gamma
    }
}

impl TryFrom<[f64; 2]> for FaultVector {
    type Error = Error;
    fn try_from(g: [f64; 2]) -> Result<Self> {
        Self::new(g[0], g[1])
    }
}

impl From<FaultVector> for [f64; 2] {
    fn from(f: FaultVector) -> [f64; 2] {
        [f.gamma[0], f.gamma[1]]
    }
}

/// Blade-break presets mapped to loss-of-effectiveness fractions, proportional
/// to the fraction of an 8-blade propeller lost. A modeling convenience, not a
/// calibrated thrust map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BladeBreak {
    OneBlade,
    TwoBlade,
    FourBlade,
    EightBlade,
}

impl BladeBreak {
    pub fn gamma(self) -> f64 {
        match self {
            BladeBreak::OneBlade => 0.125,
            BladeBreak::TwoBlade => 0.25,
            BladeBreak::FourBlade => 0.5,
            BladeBreak::EightBlade => 1.0,
        }
    }
}

/// Multiplicative actuator fault: the effective input is `(1 - gamma_i) u_i`.
pub fn apply_fault(u: Vector2<f64>, fault: &FaultVector) -> Vector2<f64> {
    let g = fault.gamma();
    Vector2::new((1.0 - g[0]) * u[0], (1.0 - g[1]) * u[1])
}

/// `x_dot = A x + B u_eff`.
pub fn derivative(m: &ContinuousModel, x: &Vector4<f64>, u_eff: &Vector2<f64>) -> Vector4<f64> {
    m.a * x + m.b * u_eff
}

/// Discrete-time plant obtained by zero-order hold at sample time `t_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_k: Matrix4<f64>,
    pub b_k: Matrix4x2<f64>,
    pub c_k: Matrix4<f64>,
    pub t_s: f64,
}

/// Matrix exponential by scaling and squaring with a Taylor series truncated
/// at order 12. The input is scaled by 2^-s until its infinity norm is below
/// 0.5, so the series truncation error is below 0.5^13/13! before squaring.
fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    const TAYLOR_ORDER: usize = 12;
    let n = m.nrows();
    let norm = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(s as i32);

    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=TAYLOR_ORDER {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Zero-order-hold discretization via the augmented-exponential construction:
/// `exp([[A, B], [0, 0]] T_s) = [[A_k, B_k], [0, I]]`.
pub fn discretize_zoh(m: &ContinuousModel, t_s: f64) -> Result<DiscreteModel> {
    if t_s <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sample time must be positive (got {t_s})"
        )));
    }
    let mut aug = DMatrix::zeros(6, 6);
    aug.view_mut((0, 0), (4, 4)).copy_from(&(m.a * t_s));
    aug.view_mut((0, 4), (4, 2)).copy_from(&(m.b * t_s));
    let e = expm(&aug);
    Ok(DiscreteModel {
        a_k: Matrix4::from_fn(|i, j| e[(i, j)]),
        b_k: Matrix4x2::from_fn(|i, j| e[(i, j + 4)]),
        c_k: m.c,
        t_s,
    })
}
