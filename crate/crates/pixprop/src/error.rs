//! One error enum for the whole crate, grouped by exit-code category.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ---- configuration problems (exit code 2) ----
    #[error("config: {0}")]
    Config(String),

    // ---- bad or inconsistent data (exit code 3) ----
    #[error("non-finite box coordinates {0:?}")]
    NonFiniteBox([f64; 4]),
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("instance id {id} appears in the mask but has no ground-truth box")]
    MissingInstance { id: u32 },
    #[error("segment count {k} exceeds pixel count {n}")]
    TooManySegments { k: usize, n: usize },
    #[error("enlargement factor {0} is below 1")]
    BadEnlargementFactor(f64),
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("stale artifact {path}: {msg}")]
    StaleArtifact { path: PathBuf, msg: String },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    // ---- training divergence (exit code 4) ----
    #[error("non-finite loss value: {0}")]
    NonFiniteLoss(f64),
    #[error("training of `{net}` diverged at epoch {epoch}: {msg}")]
    Diverged {
        net: String,
        epoch: usize,
        msg: String,
    },

    // ---- I/O (exit code 5) ----
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an `io::Error` with the path it concerns.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code category used by the CLI: 2 config, 3 data,
    /// 4 divergence, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFiniteBox(_)
            | Error::ShapeMismatch(_)
            | Error::MissingInstance { .. }
            | Error::TooManySegments { .. }
            | Error::BadEnlargementFactor(_)
            | Error::Parse { .. }
            | Error::StaleArtifact { .. }
            | Error::Checkpoint { .. } => 3,
            Error::NonFiniteLoss(_) | Error::Diverged { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}
