//! Error type shared by the file-format and manifest layers.

use thiserror::Error;

/// Failure while reading or writing toolkit files.
#[derive(Debug, Error)]
pub enum IoError {
    /// Malformed content at a specific line of a text file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        /// File the line belongs to.
        path: String,
        /// 1-based line number.
        line: usize,
        /// What was wrong with it.
        msg: String,
    },
    /// A referenced file declares a different unit than its manifest.
    #[error("{path}: file declares units '{file}' but the manifest declares '{manifest}'")]
    UnitMismatch {
        /// The referenced file.
        path: String,
        /// Unit the manifest declares.
        manifest: String,
        /// Unit the file declares.
        file: String,
    },
    /// Structurally readable input that violates the schema contract.
    #[error("schema: {0}")]
    Schema(String),
    /// Underlying filesystem failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Failure propagated from the computation layer.
    #[error(transparent)]
    Core(#[from] handeye_core::Error),
}
