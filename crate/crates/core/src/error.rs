use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward: {0}")]
    Backward(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unknown volume format")]
    UnknownFormat { path: PathBuf },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("{path}: slice is {found_h}x{found_w}, expected {expected_h}x{expected_w}")]
    InconsistentSlice {
        path: PathBuf,
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },

    #[error("manifest line {line}: duplicate case_id `{case_id}`")]
    DuplicateCaseId { line: usize, case_id: String },

    #[error("manifest line {line}: volume file not found: {path}")]
    MissingFile { line: usize, path: PathBuf },

    #[error("manifest line {line}: bad label `{token}`")]
    BadLabel { line: usize, token: String },

    #[error("case `{0}` has no label")]
    MissingLabel(String),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage/config, 2 data or format,
    /// 3 internal numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Io { .. }
            | Error::UnknownFormat { .. }
            | Error::CorruptHeader(_)
            | Error::Checksum { .. }
            | Error::InconsistentSlice { .. }
            | Error::DuplicateCaseId { .. }
            | Error::MissingFile { .. }
            | Error::BadLabel { .. }
            | Error::MissingLabel(_)
            | Error::Manifest(_) => 2,
            Error::Shape(_)
            | Error::NonFinite { .. }
            | Error::Backward(_)
            | Error::MissingGradient(_) => 3,
        }
    }
}
