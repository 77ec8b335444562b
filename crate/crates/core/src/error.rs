use crate::model::{ItemId, UserId};
use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown user {0}")]
    UnknownUser(UserId),

    #[error("unknown item {0}")]
    UnknownItem(ItemId),

    #[error("unknown id `{0}`")]
    UnknownExternalId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("need {needed} competitor items, have {available}")]
    NotEnoughItems { needed: usize, available: usize },

    #[error("target group is empty after preprocessing")]
    EmptyGroup,

    #[error("non-finite loss at iteration {iteration}; reduce the learning rate")]
    NumericFailure { iteration: usize },

    #[error("ranked list contains duplicate ids")]
    DuplicateInList,

    #[error("ranking snapshots cover different user sets")]
    UserSetMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("duplicate rating for user `{user}`, item `{item}`")]
    DuplicateRating { user: String, item: String },

    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),

    #[error("record `{record}` is missing field `{field}` referenced by the featurizer spec")]
    MissingField { record: String, field: String },

    #[error("metadata field `{0}` is missing for some users")]
    MissingMetadata(String),

    #[error("no eligible item near target rank {0}")]
    NoEligibleItem(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidConfig(_) => 1,
            Error::NumericFailure { .. } | Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
