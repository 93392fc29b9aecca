use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the spectral toolkit.
///
/// Variant names double as the stable identifiers printed by the CLI on
/// numeric failures, see [`Error::name`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("block size mismatch: {left} vs {right}")]
    BlockMismatch { left: usize, right: usize },
    #[error("lcm of periods exceeds cap {cap}")]
    LcmOverflow { cap: usize },
    #[error("matrix is not elliptic (trace {trace})")]
    NotElliptic { trace: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("energy {energy} is not in the interior of a band")]
    NotInteriorOfBand { energy: f64 },
    #[error("energy {energy} lies within {distance:e} of the exceptional set")]
    ExceptionalEnergy { energy: f64, distance: f64 },
    #[error("no hyperbolic word found up to depth {0}")]
    DepthExhausted(usize),
    #[error("operation not supported for family {0}")]
    UnsupportedFamily(String),
    #[error("no hyperbolic letter at energy {energy}")]
    NotFound { energy: f64 },
    #[error("gap cover failed to cover [{left}, {right}]")]
    CoverageFailure { left: f64, right: f64 },
    #[error("N = {n} is smaller than m*t = {min}")]
    NTooSmall { n: usize, min: usize },
    #[error("stage {stage} needs {length} letters, cap is {cap}")]
    StageBudgetExceeded { stage: usize, length: usize, cap: usize },
    #[error("window does not meet the spectrum: {0}")]
    WindowEmpty(String),
    #[error("no coupling found up to {0}")]
    NotFoundWithinBound(f64),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short identifier of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::BlockMismatch { .. } => "BlockMismatch",
            Error::LcmOverflow { .. } => "LcmOverflow",
            Error::NotElliptic { .. } => "NotElliptic",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::NotInteriorOfBand { .. } => "NotInteriorOfBand",
            Error::ExceptionalEnergy { .. } => "ExceptionalEnergy",
            Error::DepthExhausted(_) => "DepthExhausted",
            Error::UnsupportedFamily(_) => "UnsupportedFamily",
            Error::NotFound { .. } => "NotFound",
            Error::CoverageFailure { .. } => "CoverageFailure",
            Error::NTooSmall { .. } => "NTooSmall",
            Error::StageBudgetExceeded { .. } => "StageBudgetExceeded",
            Error::WindowEmpty(_) => "WindowEmpty",
            Error::NotFoundWithinBound(_) => "NotFoundWithinBound",
            Error::Parse(_) => "Parse",
        }
    }

    /// Whether the error stems from malformed input rather than from the
    /// numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::BlockMismatch { .. } | Error::Parse(_)
        )
    }
}
