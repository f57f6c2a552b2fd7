use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal ratio {residual:.3e})")]
    SvdNonConvergence { sweeps: usize, residual: f64 },

    #[error("eigen decomposition did not converge after {0} sweeps")]
    EigenNonConvergence(usize),

    #[error("matrix is singular (|det| = {det:e}); the determinant factor is infinite; use thm4")]
    Singular { det: f64 },

    #[error("matrix is not injective (rank {rank} < {cols} columns); use thm4")]
    NotInjective { rank: usize, cols: usize },

    #[error("convolution is not invertible: Fourier component {index} vanishes")]
    ConvolutionNotInvertible { index: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported activation for Koopman bound: {0}")]
    UnsupportedActivation(String),

    #[error("layer {layer}: constraint violated, factor {factor:.6e} exceeds cap D = {cap:.6e}")]
    CapViolation { layer: usize, factor: f64, cap: f64 },

    #[error("theorem {theorem} does not apply: {reason}")]
    NotApplicable { theorem: &'static str, reason: String },

    #[error("numeric failure at layer {layer}: {what}")]
    Numeric { layer: usize, what: String },

    #[error("degenerate Monte-Carlo setup: {0}")]
    Degenerate(String),

    #[error("final transform violates measure bound: |v| = {0:.6} > 1 on a sample")]
    MeasureBoundViolation(f64),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
