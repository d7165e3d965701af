use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("architecture mismatch: expected {expected} network, found {found}")]
    ArchitectureMismatch { expected: String, found: String },

    #[error("weight file format error in field `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("dataset error: {reason}{}", format_files(.files))]
    Dataset { reason: String, files: Vec<PathBuf> },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("image codec error: {0}")]
    Codec(#[from] ::image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_files(files: &[PathBuf]) -> String {
    if files.is_empty() {
        return String::new();
    }
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    format!(" ({})", names.join(", "))
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
