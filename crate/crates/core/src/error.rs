use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("class {class} at point {index} out of range for {num_classes} classes")]
    ClassOutOfRange {
        index: usize,
        class: usize,
        num_classes: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("labeled index set is empty")]
    EmptyLabelSet,

    #[error("labeled indices must be strictly increasing (violated at position {0})")]
    UnsortedIndices(usize),

    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("view seeds must differ (both {0})")]
    EqualSeeds(u64),

    #[error("no class has a defined IoU")]
    UndefinedMiou,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
