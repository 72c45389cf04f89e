use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for retrieval, scoring and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The two endpoints are too close to antipodal for a unique geodesic.
    #[error("degenerate geometry: angle {theta} rad is too close to antipodal")]
    DegenerateGeometry { theta: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A candidate id that the store does not know about.
    #[error("consistency error: unknown id {0:?}")]
    UnknownId(String),

    #[error(transparent)]
    Bundle(#[from] BundleError),

    #[error(transparent)]
    Caption(#[from] CaptionError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

/// Reasons a GMXB bundle is rejected.
///
/// Format errors carry the byte offset where decoding failed; data errors
/// name the offending record.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BundleError {
    #[error("bad magic at offset 0: expected \"GMXB\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported bundle version {version} at offset 4")]
    UnsupportedVersion { version: u32 },

    #[error("bundle header declares dimension 0")]
    ZeroDimension,

    #[error("truncated bundle at offset {offset}: {what}")]
    Truncated { offset: u64, what: &'static str },

    #[error("record at offset {offset} has an id that is not valid UTF-8")]
    InvalidId { offset: u64 },

    #[error("record at offset {offset} has an empty id")]
    EmptyId { offset: u64 },

    #[error("{extra} trailing bytes after the last record at offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },

    #[error("vector {id:?} contains a non-finite value")]
    NonFinite { id: String },

    #[error("vector {id:?} has zero norm and cannot be normalized")]
    ZeroVector { id: String },

    #[error("vector {id:?} has norm {norm}, outside the renormalization tolerance")]
    NormOutOfTolerance { id: String, norm: f64 },

    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },
}

impl BundleError {
    /// Short stable name of the error class, used in validation reports.
    pub fn class(&self) -> &'static str {
        match self {
            BundleError::BadMagic { .. } => "bad_magic",
            BundleError::UnsupportedVersion { .. } => "bad_version",
            BundleError::ZeroDimension => "zero_dimension",
            BundleError::Truncated { .. } => "truncated",
            BundleError::InvalidId { .. } => "invalid_id",
            BundleError::EmptyId { .. } => "empty_id",
            BundleError::TrailingBytes { .. } => "trailing_bytes",
            BundleError::NonFinite { .. } => "non_finite",
            BundleError::ZeroVector { .. } => "zero_vector",
            BundleError::NormOutOfTolerance { .. } => "norm_out_of_tolerance",
            BundleError::DuplicateId { .. } => "duplicate_id",
        }
    }
}

/// Failure while producing captions through a provider.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("caption generation failed: {message}")]
pub struct CaptionError {
    pub message: String,
    /// Transport failures and 5xx responses may succeed on retry.
    pub retriable: bool,
}

impl CaptionError {
    pub fn retriable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retriable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retriable: false,
        }
    }
}
