use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("particles {0} and {1} coincide")]
    CoincidentPoints(usize, usize),
    #[error("gradient lift residual {residual:e} exceeds bound {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },
    #[error("pair distances are not realizable in three dimensions: {0}")]
    NotRealizable(String),
    #[error("eigenvalue gap {gap:e} between levels {index} and {} is below tolerance", index + 1)]
    DegenerateSpectrum { index: usize, gap: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("nonlinear eigenproblem did not converge after {iterations} iterations (change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("integration blew up at step {step}")]
    BlowUp { step: usize },
    #[error("vacuum probe: density {rho:e} below floor")]
    VacuumProbe { rho: f64 },
    #[error("effective sample size {ess:.1} too small for reweighting")]
    InsufficientOverlap { ess: f64 },
    #[error("target not attainable: {0}")]
    UnattainableTarget(String),
    #[error("wavefunction under-resolved: {fraction:e} of the norm above 80% of Nyquist")]
    Resolution { fraction: f64 },
    #[error("unsupported symbol of momentum degree {degree}")]
    UnsupportedSymbol { degree: usize },
    #[error("grid of {points} points exceeds dense assembly limit {limit}")]
    GridTooLarge { points: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
