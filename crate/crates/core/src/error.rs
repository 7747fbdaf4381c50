use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("malformed manifest entry at line {line}: {reason}")]
    MalformedEntry { line: usize, reason: String },

    #[error("duplicate app id {0:?}")]
    DuplicateAppId(String),

    #[error("duplicate path {0:?}")]
    DuplicatePath(PathBuf),

    #[error("no disassembly files found under {0}")]
    EmptyCorpus(PathBuf),

    #[error("cannot determine disassembler dialect: no signature lines in the first {0} lines")]
    Undecidable(usize),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },

    #[error("contingency table is empty")]
    EmptyTable,

    #[error("too few applications to split: {0}")]
    TooFewApps(String),

    #[error("unknown experiment {0:?} (expected granularity or path-token)")]
    UnknownExperiment(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad {what} file: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("regex: {0}")]
    Regex(#[from] regex::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (arguments, manifests,
    /// configuration) rather than by a failure while doing the work.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::MalformedEntry { .. }
                | Error::DuplicateAppId(_)
                | Error::DuplicatePath(_)
                | Error::UnknownExperiment(_)
                | Error::InvalidConfig(_)
        )
    }
}
