//! Crate-wide error type.

/// Errors produced anywhere in the crate, grouped by what went wrong
/// rather than where.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value is out of its valid range or inconsistent
    /// with another setting.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller violated an operation's contract (e.g. non-scalar loss,
    /// attention over an empty premise).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad runtime input: empty sequence, label out of range, unknown id.
    #[error("invalid input: {0}")]
    Input(String),

    /// A file's contents do not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A token or embedding index that does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Training diverged or produced non-finite values.
    #[error("training error: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Format error carrying a 1-based line number, for file parsers.
    pub fn format_at(line: usize, msg: impl std::fmt::Display) -> Self {
        Error::Format(format!("line {line}: {msg}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
