//! LQR synthesis: continuous algebraic Riccati equation solver
//! (Kleinman-Newton iteration over Kronecker-product Lyapunov solves) and the
//! full-state-feedback control law `u = K (r - x)`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContinuousModel;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;

/// LQR weighting matrices. Defaults are `Q = diag(150, 75, 0, 0)`,
/// `R = diag(0.01, 0.01)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vector4::new(150.0, 75.0, 0.0, 0.0)),
            r: Matrix2::from_diagonal(&Vector2::new(0.01, 0.01)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqrConfig {
    pub q_diag: [f64; 4],
    pub r_diag: [f64; 2],
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            q_diag: [150.0, 75.0, 0.0, 0.0],
            r_diag: [0.01, 0.01],
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl LqrConfig {
    pub fn weights(&self) -> LqrWeights {
        LqrWeights {
            q: Matrix4::from_diagonal(&Vector4::from_row_slice(&self.q_diag)),
            r: Matrix2::from_diagonal(&Vector2::from_row_slice(&self.r_diag)),
        }
    }
}

/// Riccati solution and gain for a synthesized controller.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrController {
    pub p: Matrix4<f64>,
    pub k: Matrix2x4<f64>,
}

/// Output of [`solve_care`]: the stabilizing solution plus the per-iteration
/// residual history for diagnostics.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

/// Frobenius norm of `A'P + PA - P B R^-1 B' P + Q`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    res.norm()
}

/// Solve the Lyapunov equation `M' P + P M + C = 0` through the
/// Kronecker-product linear system. Unique solution requires that `M` and
/// `-M'` share no eigenvalues (holds for Hurwitz `M`).
pub fn solve_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mt = m.transpose();
    // vec(M'P) = (I (x) M') vec(P); vec(PM) = (M' (x) I) vec(P)
    let coeff = eye.kronecker(&mt) + mt.kronecker(&eye);
    let rhs = -DVector::from_column_slice(c.as_slice());
    let sol = coeff
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov coefficient matrix is singular".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Bass-shift bootstrap: a stabilizing initial gain for the Kleinman
/// iteration. With `beta` exceeding the infinity norm of `A`, the matrix
/// `-(A + beta I)` is Hurwitz, so `(A + beta I) Z + Z (A + beta I)' = 2 B B'`
/// has a unique solution; `Z` is positive definite when `(A, B)` is
/// controllable and `K0 = B' Z^-1` places `A - B K0` in the open left half
/// plane.
fn stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let beta = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
        + 1.0;
    let shifted = a + DMatrix::identity(n, n) * beta;
    let m = -shifted.transpose();
    let z = solve_lyapunov(&m, &(2.0 * b * b.transpose()))?;
    let z_inv = z.clone().try_inverse().ok_or_else(|| {
        Error::Singular("Bass bootstrap Gramian is singular; (A, B) may be uncontrollable".into())
    })?;
    Ok(b.transpose() * z_inv)
}

/// Solve the continuous algebraic Riccati equation
/// `A'P + PA - P B R^-1 B' P + Q = 0` for its stabilizing solution by
/// Kleinman-Newton iteration: each step solves the Lyapunov equation
/// `(A - B K_i)' P + P (A - B K_i) = -(Q + K_i' R K_i)` and refreshes
/// `K_{i+1} = R^-1 B' P`.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<CareSolution> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive (got {tol})"
        )));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("R is singular".into()))?;

    let mut k = stabilizing_gain(a, b)?;
    let mut history = Vec::new();
    let mut plateau = 0usize;

    for iter in 0..max_iter {
        let closed = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        let mut p = solve_lyapunov(&closed, &rhs)?;
        p = (&p + p.transpose()) * 0.5;
        k = &r_inv * b.transpose() * &p;

        let res = care_residual(a, b, q, &r_inv, &p);
        if let Some(&prev) = history.last() {
            if res >= prev * 0.999 {
                plateau += 1;
            } else {
                plateau = 0;
            }
        }
        history.push(res);
        if res < tol {
            return Ok(CareSolution {
                p,
                residual: res,
                residual_history: history,
                iterations: iter + 1,
            });
        }
        if plateau >= 5 {
            return Err(Error::SolverPlateau { residual: res });
        }
    }
    Err(Error::SolverNonConvergence {
        iterations: max_iter,
        residual: *history.last().unwrap_or(&f64::NAN),
    })
}

/// `K = R^-1 B' P`.
pub fn lqr_gain(p: &Matrix4<f64>, b: &Matrix4x2<f64>, r: &Matrix2<f64>) -> Result<Matrix2x4<f64>> {
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| Error::Singular("R is singular".into()))?;
    Ok(r_inv * b.transpose() * p)
}

/// Full-state feedback tracking law `u = K (r - x)`, before saturation.
pub fn control_law(k: &Matrix2x4<f64>, r: &Vector4<f64>, x: &Vector4<f64>) -> Vector2<f64> {
    k * (r - x)
}

impl LqrController {
    /// Synthesize the gain for a plant, verifying the Riccati residual and
    /// closed-loop stability.
    pub fn synthesize(
        m: &ContinuousModel,
        weights: &LqrWeights,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self> {
        let a_d = DMatrix::from_column_slice(4, 4, m.a.as_slice());
        let b_d = DMatrix::from_column_slice(4, 2, m.b.as_slice());
        let q_d = DMatrix::from_column_slice(4, 4, weights.q.as_slice());
        let r_d = DMatrix::from_column_slice(2, 2, weights.r.as_slice());
        let sol = solve_care(&a_d, &b_d, &q_d, &r_d, tol, max_iter)?;

        let p = Matrix4::from_column_slice(sol.p.as_slice());
        let k = lqr_gain(&p, &m.b, &weights.r)?;
        let closed = m.a - m.b * k;
        let abscissa = closed
            .complex_eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if abscissa >= 0.0 {
            return Err(Error::Numerical(format!(
                "closed loop not stable: spectral abscissa {abscissa:.3e}"
            )));
        }
        Ok(Self { p, k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_care_trivial_root() {
        // a = 0, b = 1, q = 1, r = 1: -p^2 + 1 = 0, p = 1
        let sol = solve_care(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-12, 100)
            .unwrap();
        assert_abs_diff_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn scalar_care_quadratic_oracle() {
        // a = 1, b = 1, q = 2, r = 1: 2p - p^2 + 2 = 0, p = 1 + sqrt(3)
        let sol = solve_care(&scalar(1.0), &scalar(1.0), &scalar(2.0), &scalar(1.0), 1e-12, 100)
            .unwrap();
        assert_abs_diff_eq!(sol.p[(0, 0)], 1.0 + 3.0_f64.sqrt(), epsilon = 1e-9);
        // scalar gain k = p/r = p
        assert_abs_diff_eq!(
            (sol.p[(0, 0)] / 1.0),
            2.73205,
            epsilon = 1e-5
        );
    }

    #[test]
    fn canonical_plant_care_residual() {
        let m = ContinuousModel::canonical();
        let w = LqrWeights::default();
        let ctrl = LqrController::synthesize(&m, &w, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();

        // residual oracle, computed independently of the solver path
        let r_inv = w.r.try_inverse().unwrap();
        let res = m.a.transpose() * ctrl.p + ctrl.p * m.a
            - ctrl.p * m.b * r_inv * m.b.transpose() * ctrl.p
            + w.q;
        assert!(res.norm() < 1e-8, "residual {}", res.norm());

        // symmetric PSD
        assert!((ctrl.p - ctrl.p.transpose()).abs().max() < 1e-10);
        let min_eig = ctrl
            .p
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-10, "P not PSD: min eigenvalue {min_eig}");

        // closed-loop stability
        let closed = m.a - m.b * ctrl.k;
        for e in closed.complex_eigenvalues().iter() {
            assert!(e.re < 0.0, "unstable closed-loop eigenvalue {e}");
        }
    }

    #[test]
    fn residual_history_non_increasing() {
        let m = ContinuousModel::canonical();
        let w = LqrWeights::default();
        let sol = solve_care(
            &DMatrix::from_column_slice(4, 4, m.a.as_slice()),
            &DMatrix::from_column_slice(4, 2, m.b.as_slice()),
            &DMatrix::from_column_slice(4, 4, w.q.as_slice()),
            &DMatrix::from_column_slice(2, 2, w.r.as_slice()),
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        for pair in sol.residual_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "residual increased: {pair:?}");
        }
    }

    #[test]
    fn gain_zero_for_zero_b() {
        let p = Matrix4::identity();
        let b = Matrix4x2::zeros();
        let r = Matrix2::identity() * 0.01;
        assert_eq!(lqr_gain(&p, &b, &r).unwrap(), Matrix2x4::zeros());
    }

    #[test]
    fn gain_rejects_singular_r() {
        let p = Matrix4::identity();
        let b = Matrix4x2::zeros();
        assert!(lqr_gain(&p, &b, &Matrix2::zeros()).is_err());
    }

    #[test]
    fn control_law_examples() {
        let mut k = Matrix2x4::zeros();
        k[(0, 0)] = 2.0;
        let r = Vector4::new(3.0, 0.0, 0.0, 0.0);
        assert_eq!(control_law(&k, &r, &Vector4::zeros()), Vector2::new(6.0, 0.0));
        assert_eq!(control_law(&k, &r, &r), Vector2::zeros());
    }

    #[test]
    fn control_law_step_reference() {
        let m = ContinuousModel::canonical();
        let ctrl =
            LqrController::synthesize(&m, &LqrWeights::default(), DEFAULT_TOL, DEFAULT_MAX_ITER)
                .unwrap();
        let r_mag = 10.0_f64.to_radians();
        let r = Vector4::new(r_mag, 0.0, 0.0, 0.0);
        let u = control_law(&ctrl.k, &r, &Vector4::zeros());
        let expected = ctrl.k.column(0) * r_mag;
        assert_abs_diff_eq!(u, expected.into(), epsilon = 1e-12);
    }

    #[test]
    fn qr_common_scaling_leaves_gain_invariant() {
        let m = ContinuousModel::canonical();
        let w = LqrWeights::default();
        let scaled = LqrWeights {
            q: w.q * 7.5,
            r: w.r * 7.5,
        };
        let k1 = LqrController::synthesize(&m, &w, DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap()
            .k;
        let k2 = LqrController::synthesize(&m, &scaled, DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap()
            .k;
        assert!((k1 - k2).abs().max() < 1e-8, "gain changed under common scaling");
    }
}
