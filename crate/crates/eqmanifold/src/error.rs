//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by model validation, geometry evaluation, geodesic
/// integration and the selection operator.
#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation parameter outside the certified domain of the economy.
    #[error("t = {t} outside the certified domain [{t_min}, {t_max}]")]
    Domain { t: f64, t_min: f64, t_max: f64 },

    /// Model or configuration failed validation.
    #[error("validation failed: {0}")]
    Validation(String),

    /// det g fell below the singularity threshold; the parametrization is not
    /// an immersion at this point.
    #[error("singular metric at t = {t}: det g = {det_g:e} <= 1e-14")]
    SingularMetric { det_g: f64, t: f64 },

    /// The 2-plane spanned by the requested basis directions is degenerate.
    #[error("degenerate plane spanned by (X{i}, X{j}): |Xi|^2|Xj|^2 - <Xi,Xj>^2 = {value:e}")]
    DegeneratePlane { value: f64, i: usize, j: usize },

    /// A geodesic left the certified t-domain before s = 1.
    #[error("geodesic left the certified domain at s = {s}: t = {t}")]
    DomainExit { s: f64, t: f64, coords: Vec<f64> },

    /// The adaptive integrator underflowed its minimum step size.
    #[error("integrator step underflow at s = {s} (h = {step:e})")]
    Stiffness { s: f64, step: f64 },

    /// Newton shooting for the log map failed to converge.
    #[error("log map did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The selection refinement loop stopped making progress.
    #[error("selection refinement stalled after {iterations} iterations (residual {residual:e})")]
    RefinementStall { iterations: usize, residual: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
