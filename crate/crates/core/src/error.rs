use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("polynomial variable counts differ: {0}")]
    VarMismatch(String),

    #[error("polynomial is not homogeneous of degree {0}")]
    NotHomogeneous(u32),

    #[error("polynomial contains control or noise variables")]
    NoiseOrControlPresent,

    #[error("noise exponent {0} exceeds the supported maximum")]
    DegreeTooHigh(u32),

    #[error("iteration did not converge within {max_iter} steps")]
    NotConverged { max_iter: usize },

    #[error("inner matrix is numerically singular{}", stage.map(|t| format!(" at stage {t}")).unwrap_or_default())]
    SingularInnerMatrix { stage: Option<usize> },

    #[error("Riccati solution is not stabilizing (closed-loop spectral radius {spectral_radius})")]
    NotStabilizing { spectral_radius: f64 },

    #[error("Riccati residual {residual:e} exceeds {bound:e}; the problem is too ill-conditioned for the requested tolerance")]
    InaccurateSolution { residual: f64, bound: f64 },

    #[error("iteration diverged at step {iteration} (|P| = {norm:e})")]
    IterationDiverged { iteration: usize, norm: f64 },

    #[error("cost operator of degree {degree} is singular (smallest singular value {sigma_min:e})")]
    OperatorSingular { degree: u32, sigma_min: f64 },

    #[error("degree {requested} exceeds the model's Taylor data (valid through degree {available})")]
    DegreeExceedsModel { requested: u32, available: u32 },

    #[error("state became non-finite on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("simulation configs disagree: {0}")]
    ConfigMismatch(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// Stable variant name, used for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Parse(_) => "ParseError",
            Error::Dimension(_) => "DimensionError",
            Error::Invariant(_) => "InvariantError",
            Error::VarMismatch(_) => "VarMismatch",
            Error::NotHomogeneous(_) => "NotHomogeneous",
            Error::NoiseOrControlPresent => "NoiseOrControlPresent",
            Error::DegreeTooHigh(_) => "DegreeTooHigh",
            Error::NotConverged { .. } => "NotConverged",
            Error::SingularInnerMatrix { .. } => "SingularInnerMatrix",
            Error::NotStabilizing { .. } => "NotStabilizing",
            Error::InaccurateSolution { .. } => "InaccurateSolution",
            Error::IterationDiverged { .. } => "IterationDiverged",
            Error::OperatorSingular { .. } => "OperatorSingular",
            Error::DegreeExceedsModel { .. } => "DegreeExceedsModel",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::Io(_) => "IoError",
            Error::Context { .. } => unreachable!(),
        }
    }

    /// True for failures of a numerical solver on well-formed input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::NotConverged { .. }
                | Error::SingularInnerMatrix { .. }
                | Error::IterationDiverged { .. }
                | Error::InaccurateSolution { .. }
                | Error::NotStabilizing { .. }
                | Error::OperatorSingular { .. }
                | Error::NonFiniteState { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
