use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp `{value}`")]
    BadTimestamp { row: u64, value: String },
    #[error("row {row}: empty activity label")]
    EmptyActivity { row: u64 },
    #[error("event log contains no traces")]
    EmptyLog,
    #[error("invalid trace `{case_id}`: {reason}")]
    InvalidTrace { case_id: String, reason: String },
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),

    #[error("activity label `{0}` collides with the reserved end symbol")]
    ReservedLabelCollision(String),
    #[error("unknown activity `{label}` in case `{case_id}`")]
    UnknownActivity { label: String, case_id: String },
    #[error("prefix of length {len} exceeds the model's maximum length {max_len}")]
    PrefixTooLong { len: usize, max_len: usize },
    #[error("trace too short: length {len}, need at least 2 events")]
    TraceTooShort { len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input value")]
    NonFiniteInput,

    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("too few traces: {have} traces cannot form {k} folds")]
    TooFewTraces { have: usize, k: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid grammar: {0}")]
    InvalidSpec(String),
    #[error("grammar is not a copy task")]
    NotACopyTask,
}

impl Error {
    /// Process exit code: 2 for I/O and parse errors, 3 for domain guards,
    /// 4 for internal invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MissingColumn(_)
            | Error::BadTimestamp { .. }
            | Error::EmptyActivity { .. }
            | Error::InvalidTrace { .. }
            | Error::DuplicateCase(_)
            | Error::VersionMismatch { .. }
            | Error::CorruptModel(_)
            | Error::InvalidSpec(_)
            | Error::InvalidConfig(_) => 2,
            Error::EmptyLog
            | Error::ReservedLabelCollision(_)
            | Error::UnknownActivity { .. }
            | Error::PrefixTooLong { .. }
            | Error::TraceTooShort { .. }
            | Error::EmptyDataset
            | Error::TooFewTraces { .. }
            | Error::NotACopyTask => 3,
            Error::ShapeMismatch(_)
            | Error::NonFiniteInput
            | Error::NonFiniteLoss { .. }
            | Error::LengthMismatch(..) => 4,
        }
    }
}
