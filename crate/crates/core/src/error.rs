use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("max-plus function has no forms")]
    EmptyFunction,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config [{section}] {key}: {message}")]
    Config {
        section: String,
        key: String,
        message: String,
    },

    #[error("sample plan: {0}")]
    Plan(String),

    #[error("split condition violated: trace value {trace_value} > 1 (epsilon^2 = {eps_sq}, need >= {bound})")]
    Split {
        trace_value: f64,
        eps_sq: f64,
        bound: f64,
    },

    #[error("singular diffusion for mode {mode} at x = {x:?}")]
    SingularDiffusion { mode: String, x: Vec<f64> },

    #[error("payoff approximation failed: achieved error {achieved:.6} exceeds target {target:.6}")]
    PayoffApprox { achieved: f64, target: f64 },

    #[error("solve failed at t = {t}, omega = {omega}, mode = {mode}: {source}")]
    Solve {
        t: f64,
        omega: usize,
        mode: String,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown time {0}")]
    UnknownTime(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::EmptyFunction => "empty_function",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config { .. } => "config",
            Error::Plan(_) => "plan",
            Error::Split { .. } => "split",
            Error::SingularDiffusion { .. } => "singular_diffusion",
            Error::PayoffApprox { .. } => "payoff_approx",
            Error::Solve { .. } => "solve",
            Error::NonFinite(_) => "non_finite",
            Error::Unsupported(_) => "unsupported",
            Error::UnknownTime(_) => "unknown_time",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn config(section: &str, key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            section: section.to_string(),
            key: key.to_string(),
            message: message.into(),
        }
    }
}
