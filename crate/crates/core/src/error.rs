use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A state, token or table shape outside what the environment defines.
    #[error("invalid input: {0}")]
    Input(String),
    /// A configuration value violates its contract.
    #[error("config error: {0}")]
    Config(String),
    /// Exhaustive enumeration would exceed the configured leaf cap.
    #[error("enumeration exceeds cap of {cap} trajectories")]
    EnumerationCap { cap: usize },
    /// Training produced a non-finite parameter.
    #[error("non-finite parameter at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        last_finite: Option<Box<crate::solvers::Checkpoint>>,
    },
    /// Malformed checkpoint or policy file.
    #[error("format error: {0}")]
    Format(String),
    /// Output directory already holds results.
    #[error("output directory {0} already contains results (use --force)")]
    OutputExists(PathBuf),
    /// Expected experiment cells have no results.
    #[error("missing results for: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
