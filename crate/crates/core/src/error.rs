use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field is malformed or inconsistent. `path` is the
    /// dotted field path (e.g. `simulation.h`).
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A model or window fails one of its hypotheses.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric error in {module}: {message}")]
    Numeric {
        module: &'static str,
        message: String,
    },

    #[error("value {value} is outside the supported range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time {0} is not aligned with the simulation grid")]
    Alignment(String),

    #[error("non-finite state on path {path} at step {step}")]
    Simulation { path: usize, step: usize },

    #[error("ensemble file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            message: message.into(),
        }
    }
}
