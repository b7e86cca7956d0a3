use std::path::PathBuf;

use thiserror::Error;

use crate::kind::CorruptionSpec;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("invalid image buffer: {0}")]
    InvalidBuffer(String),

    #[error("insufficient tissue: {found} pixels above the transparency threshold, need at least {required}")]
    InsufficientTissue { found: usize, required: usize },

    #[error("monochrome input: optical density cloud does not span two stain directions")]
    MonochromeInput,

    #[error("unknown corruption kind `{given}`; valid kinds: {valid}")]
    UnknownKind { given: String, valid: String },

    #[error("severity {0} out of range, expected 1..=5")]
    SeverityOutOfRange(u8),

    #[error("invalid optical parameters: {0}")]
    InvalidOptics(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{source} (while applying {spec})")]
    Corruption {
        spec: CorruptionSpec,
        #[source]
        source: Box<Error>,
    },

    #[error("image I/O error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Parse(String),
}
