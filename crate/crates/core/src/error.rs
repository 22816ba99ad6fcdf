use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoord(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("empty evaluation set")]
    EmptySet,

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("step `{step}` has {found} candidate confidences, need {needed}")]
    Coverage { step: String, found: usize, needed: usize },

    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("unknown format `{0}`")]
    UnknownFormat(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn record(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidRecord {
            id: id.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
