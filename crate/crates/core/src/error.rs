use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("log message is empty")]
    EmptyLog,

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("line {line}: unknown tag `{tag}`")]
    Tag { line: usize, tag: String },

    #[error("line {line}: ill-formed IOB sequence: {msg}")]
    Iob { line: usize, msg: String },

    #[error("cannot align content with template: {0}")]
    Alignment(String),

    #[error("line {line}: vector has dimension {found}, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("log {index}: token sequences of prediction and gold differ ({msg})")]
    TokenMismatch { index: usize, msg: String },

    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("unsupported model format version {0}")]
    Version(u32),

    #[error("model file checksum mismatch (file truncated or corrupted)")]
    Checksum,

    #[error("tag mode mismatch: {0}")]
    Mode(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyLog => "EmptyLog",
            Error::Format { .. } => "FormatError",
            Error::Tag { .. } => "TagError",
            Error::Iob { .. } => "IOBError",
            Error::Alignment(_) => "AlignmentError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::TokenMismatch { .. } => "TokenMismatch",
            Error::Divergence { .. } => "DivergenceError",
            Error::Version(_) => "VersionError",
            Error::Checksum => "ChecksumError",
            Error::Mode(_) => "ModeError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Path { source, .. } => source.kind(),
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }

    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Error {
        Error::Path {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
