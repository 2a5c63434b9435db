//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = KdvError> = core::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KdvError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tau function non-positive at x={x}, t={t} (tau={tau})")]
    DegenerateTau { x: f64, t: f64, tau: f64 },

    #[error("scalar overflow: {0}")]
    Overflow(String),

    #[error("spectral parameter outside admissible strip: {0}")]
    StripViolation(String),

    #[error("k = 0 is excluded from the spectral grid")]
    KZero,

    #[error("Wronskian matching points disagree (spread {spread:.3e} > tol {tol:.3e})")]
    MatchingPointMismatch { spread: f64, tol: f64 },

    #[error("ODE integration did not converge: {0}")]
    NonConvergent(String),

    #[error("|a(k)| = {min_abs:.3e} too small on contour/strip")]
    NearZeroTransmission { min_abs: f64 },

    #[error("winding number {value:.3} not within 0.1 of an integer")]
    NonIntegerWinding { value: f64 },

    #[error("norming constant cross-check failed for beta={beta}: quadrature {quad:.6e} vs formula {formula:.6e}")]
    InconsistentNorming { beta: f64, quad: f64, formula: f64 },

    #[error("non-normalizable eigenfunction at beta={beta}: tail grows")]
    NonNormalizable { beta: f64 },

    #[error("quadrature grid too coarse: {0}")]
    Resolution(String),

    #[error("linear system nearly singular (condition estimate {cond:.3e})")]
    SingularSystem { cond: f64 },

    #[error("Cramer and dense solves disagree (relative {rel:.3e})")]
    CramerMismatch { rel: f64 },

    #[error("point outside admissible region: {0}")]
    RegionViolation(String),

    #[error("stability hypothesis failed: {0}")]
    HypothesisFailure(String),

    #[error("PDE solution blew up: sup|u| grew from {initial:.3e} to {current:.3e}")]
    BlowUp { initial: f64, current: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl KdvError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        KdvError::InvalidInput(msg.into())
    }
}
