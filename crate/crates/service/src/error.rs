use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot read scenario {path}: {message}")]
    Unreadable { path: PathBuf, message: String },

    #[error("run directory {dir} is incomplete; missing: {}", missing.join(", "))]
    IncompleteRun { dir: PathBuf, missing: Vec<String> },

    #[error("replayed log differs from the archived log at seq {seq}")]
    Mismatch { seq: u64 },

    #[error(transparent)]
    Core(#[from] driftline_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
