use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {position}: {message}")]
    Parse { position: String, message: String },

    #[error("invalid dataset:\n{0}")]
    Validation(ValidationReport),

    #[error("degenerate rating scale: max ({max}) must exceed min ({min})")]
    DegenerateScale { min: f64, max: f64 },

    #[error("unknown condition `{0}`")]
    UnknownCondition(String),

    #[error("instance `{instance}` has {found} annotation(s) in condition `{condition}`, need at least 2")]
    MissingAnnotations {
        instance: String,
        condition: String,
        found: usize,
    },

    #[error("instance `{instance}` has no scores in condition `{condition}`")]
    MissingScores { instance: String, condition: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the content of the input data rather than by
    /// how the engine was invoked.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::DegenerateScale { .. }
                | Error::MissingAnnotations { .. }
                | Error::MissingScores { .. }
        )
    }
}
