use std::path::PathBuf;

use crate::dynamics::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("node singularity at t={t}, x={x}: density {density:e} below threshold {threshold:e}")]
    NodeSingularity {
        t: f64,
        x: f64,
        density: f64,
        threshold: f64,
    },

    /// Step control gave up. The partial trajectory up to the stall is kept.
    #[error("integration stalled at t={t}, x={x} (N={truncation}): step fell below dt_min")]
    Stalled {
        t: f64,
        x: f64,
        truncation: usize,
        partial: Box<Trajectory>,
    },

    #[error("too few points for {what}: need {need}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Some tasks of a command failed numerically; their messages.
    #[error("{} task(s) failed: {}", .0.len(), .0.join("; "))]
    Partial(Vec<String>),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors that come out of the numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NodeSingularity { .. } | Error::Stalled { .. } | Error::NonFinite(_) | Error::Partial(_)
        )
    }
}
