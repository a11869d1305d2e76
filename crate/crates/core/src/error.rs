use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state space: {0}")]
    InvalidSpace(String),

    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("invalid stage: {0}")]
    InvalidStage(String),

    #[error("corrupt staging at level {level}: {reason}")]
    CorruptStaging { level: usize, reason: String },

    #[error(
        "context-size bound {0} is not supported: enumerating stagings with more than two \
         context variables is the open general case of the Alon-Balogh cube-partition problem"
    )]
    UnsupportedBound(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("missing score entry: {0}")]
    MissingScore(String),

    #[error("state space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("trace contains no samples")]
    EmptyTrace,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by a configured size cap rather than bad input.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::Resource(_))
    }
}
