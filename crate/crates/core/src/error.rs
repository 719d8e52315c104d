use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric error in {primitive}: {detail}")]
    Numeric {
        primitive: &'static str,
        detail: String,
    },

    #[error("non-finite value at step {t}")]
    Divergence { t: usize },

    #[error("infeasible stage{}", match .t { Some(t) => format!(" at step {t}"), None => String::new() })]
    InfeasibleStage { t: Option<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("line search stalled at stepsize {gamma:e}")]
    Stall { gamma: f64 },

    #[error("track error: {0}")]
    Track(String),

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
