use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants map onto three categories (see [`Error::category`]) which the
/// command-line front end turns into exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measurement outcome {outcome} has zero overlap with the state (weight {weight:e})")]
    ZeroOverlap { outcome: f64, weight: f64 },

    #[error("detector kernel width {width} is not resolvable on a grid with spacing {spacing}")]
    KernelUnderresolved { width: f64, spacing: f64 },

    #[error("grid too small: boundary amplitude ratio {ratio:e} exceeds 1e-8")]
    GridTooSmall { ratio: f64 },

    #[error("root at x = {root} is degenerate: |f'| = {slope:e}")]
    DegenerateRoot { root: f64, slope: f64 },

    #[error("undepleted-pump assumption violated: {what} = {value} is not small against {bound} (ratio must be < 0.1)")]
    UndepletedAssumptionViolated {
        what: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("n0 truncation at {n0_max} leaves tail probability {tail:e} (limit 1e-10)")]
    Truncation { n0_max: usize, tail: f64 },

    #[error("outcome n0 = {n0} has probability {probability:e}")]
    ZeroProbabilityOutcome { n0: usize, probability: f64 },

    #[error("closed-form moments hold only for alpha = pi/4 and N1 = N2: {0}")]
    FormulaScope(String),

    #[error("trajectory stalled in the dark state after {detections} of {requested} detections")]
    DarkStateStall { detections: usize, requested: usize },

    #[error("dense Fock space of dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("adaptive integrator failed: step size {step:e} at t = {time}")]
    StepControlFailure { step: f64, time: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Model,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => ErrorCategory::Config,
            Error::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Model,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroOverlap { .. } => "ZeroOverlap",
            Error::KernelUnderresolved { .. } => "KernelUnderresolved",
            Error::GridTooSmall { .. } => "GridTooSmall",
            Error::DegenerateRoot { .. } => "DegenerateRoot",
            Error::UndepletedAssumptionViolated { .. } => "UndepletedAssumptionViolated",
            Error::Truncation { .. } => "TruncationError",
            Error::ZeroProbabilityOutcome { .. } => "ZeroProbabilityOutcome",
            Error::FormulaScope(_) => "FormulaScopeError",
            Error::DarkStateStall { .. } => "DarkStateStall",
            Error::DimensionCap { .. } => "DimensionCap",
            Error::StepControlFailure { .. } => "StepControlFailure",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
