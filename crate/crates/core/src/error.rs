use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum NlsError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("frequency {omega} is not above the branch threshold {threshold}")]
    Frequency { omega: f64, threshold: f64 },

    #[error("bump count {j} is not admissible for N={n_edges}, alpha={alpha}: {}", branch_rule(*alpha))]
    Branch { j: usize, n_edges: usize, alpha: f64 },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("no stationary state with mass {mass}: the branch minimum is {min_mass}")]
    NoSolution { mass: f64, min_mass: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("step size: {0}")]
    StepSize(String),

    #[error("eigensolver failed after {iterations} iterations: {reason}")]
    Solver { iterations: usize, reason: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("fixed-point iteration did not converge at t={t} (increment {increment:e} after {iterations} iterations); try a smaller dt")]
    StepNotConverged { t: f64, increment: f64, iterations: usize },

    #[error("blow-up signal at t={t}: discrete H1 norm {h1_norm:e} exceeds threshold")]
    BlowUp { t: f64, h1_norm: f64 },

    #[error("invalid setup: {0}")]
    Setup(String),
}

fn branch_rule(alpha: f64) -> &'static str {
    if alpha < 0.0 {
        "an attractive vertex needs 2j < N"
    } else if alpha > 0.0 {
        "a repulsive vertex needs 2j > N"
    } else {
        "a Kirchhoff vertex has no bump branches"
    }
}

pub type Result<T> = std::result::Result<T, NlsError>;
