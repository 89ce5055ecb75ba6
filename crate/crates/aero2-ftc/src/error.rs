use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Riccati solver failed to converge after {iterations} iterations (residual {residual:.3e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("Riccati residual plateaued at {residual:.3e}; system may not be stabilizable")]
    SolverPlateau { residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t:.4} s (state norm {norm:.3e})")]
    Diverged { t: f64, norm: f64 },

    #[error("metrics error: {0}")]
    Metrics(String),
}

pub type Result<T> = std::result::Result<T, Error>;
