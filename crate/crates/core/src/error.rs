use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),

    #[error("{func} is undefined at t = {t} (argument {re} + {im}i)")]
    DomainError {
        func: &'static str,
        t: f64,
        re: f64,
        im: f64,
    },

    #[error("quadrature did not reach tolerance on [{a}, {b}] (error estimate {err:e})")]
    QuadratureFailure { a: f64, b: f64, err: f64 },

    #[error("expression node `{0}` cannot be differentiated")]
    NonDifferentiable(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("function must be positive, got {value} at t = {t}")]
    NonPositiveInput { t: f64, value: f64 },

    #[error("discriminant is not positive: D({t}) = {value}")]
    NonPositiveDiscriminant { t: f64, value: f64 },

    #[error("discriminant is not real: Im D({t}) = {im:e}")]
    ComplexDiscriminant { t: f64, im: f64 },

    #[error("t = {t} lies outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

impl Error {
    /// Errors meaning the theory's standing hypothesis (real, positive D) fails.
    pub fn is_theory_inapplicable(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveDiscriminant { .. } | Error::ComplexDiscriminant { .. }
        )
    }

    /// Variant name, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnboundParameter(_) => "UnboundParameter",
            Error::DomainError { .. } => "DomainError",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::NonDifferentiable(_) => "NonDifferentiable",
            Error::Parse { .. } => "Parse",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::NonPositiveInput { .. } => "NonPositiveInput",
            Error::NonPositiveDiscriminant { .. } => "NonPositiveDiscriminant",
            Error::ComplexDiscriminant { .. } => "ComplexDiscriminant",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnknownProblem(_) => "UnknownProblem",
            Error::Json(_) => "Json",
        }
    }

    pub fn is_integrator_failure(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. } | Error::QuadratureFailure { .. }
        )
    }
}
