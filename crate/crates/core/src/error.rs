use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("provider `{provider}`: non-positive null variance {variance}")]
    DegenerateVariance { provider: String, variance: f64 },

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error("provider `{provider}`: non-positive sandwich weight {weight}")]
    DegenerateWeight { provider: String, weight: f64 },

    #[error("objective is not finite at the starting point")]
    InvalidStart,

    #[error("no provider falls inside its null interval; the model is not identifiable")]
    NoNullProviders,

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("quantile bracketing failed for p = {p}: {detail}")]
    Bracketing { p: f64, detail: String },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{failed} of {total} replicates failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// Short machine-friendly tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::DegenerateVariance { .. } => "degenerate_variance",
            Error::SingularDesign(_) => "singular_design",
            Error::DegenerateWeight { .. } => "degenerate_weight",
            Error::InvalidStart => "invalid_start",
            Error::NoNullProviders => "no_null_providers",
            Error::FitFailure(_) => "fit_failure",
            Error::Bracketing { .. } => "bracketing",
            Error::Scenario(_) => "scenario",
            Error::TooManyFailures { .. } => "too_many_failures",
        }
    }
}
