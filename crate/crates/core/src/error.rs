use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right} points")]
    GridMismatch { left: usize, right: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no bump found after {iterations} iterations (residual {residual:.3e})")]
    NoBump { iterations: usize, residual: f64 },
    #[error("trivial state: the fixed point is spatially constant")]
    TrivialState,
    #[error("spectral assumption violated: {near_zero} eigenvalues near zero")]
    SpectralAssumption { near_zero: usize },
    #[error("stability assumption violated: {0}")]
    StabilityAssumption(String),
    #[error("blow-up at step {step}")]
    BlowUp { step: usize },
    #[error("phase undefined: {0}")]
    PhaseUndefined(String),
    #[error("left basin: no convergence within t = {t_max:.3}")]
    LeftBasin { t_max: f64 },
    #[error("degenerate phase diffusion at alpha = {alpha:.4} (H = {value:.3e})")]
    DegenerateDiffusion { alpha: f64, value: f64 },
    #[error("FP solver inconsistency: total variation {tv:.3e}")]
    FpInconsistency { tv: f64 },
    #[error("empty input")]
    EmptyInput,
}

pub type Result<T> = std::result::Result<T, Error>;
