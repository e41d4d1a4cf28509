use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("infinite moment: E[S(t)^-{k}] diverges for {bernstein} at t = {t}")]
    InfiniteMoment { bernstein: String, k: f64, t: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("rejection sampler gave up after {attempts} attempts (acceptance rate {acceptance_rate:e})")]
    RejectionExhausted { attempts: usize, acceptance_rate: f64 },

    #[error(
        "clock extension missing: regularization needs the path on [0, {needed}] but it ends at {available}; sample the subordinator on [0, T + eps]"
    )]
    MissingExtension { needed: f64, available: f64 },

    #[error("negative clock increment {increment:e} at step {step}")]
    NegativeIncrement { step: usize, increment: f64 },

    #[error("non-finite state at step {step}: stiff drift or grid too coarse")]
    NonFinite { step: usize },

    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonDivergence { residual: f64, iterations: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("{failed} of {total} paths failed; first failure: {first}")]
    PathFailures {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("observable `{name}` must be strictly positive, got {value}")]
    NonPositiveObservable { name: String, value: f64 },

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
