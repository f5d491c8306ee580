use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A class or domain label is out of range.
    #[error("label error: {0}")]
    Label(String),

    /// A caller broke an operation's contract (non-scalar loss, step past
    /// the schedule horizon, negative loss fed to the clamp, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// A configuration violates one of its stated constraints.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset-level problem (empty domain, missing split, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Raw input unusable (image smaller than the crop, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A binary file does not parse as the expected container.
    #[error("format error: {0}")]
    Format(String),

    /// Container parsed but carries an unsupported format version.
    #[error("version error: found format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }
}
