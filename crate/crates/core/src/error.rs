use std::path::PathBuf;

/// Unified error type for the whole engine.
///
/// Variants map onto process exit codes at the CLI boundary: everything
/// except [`Error::Numeric`] is a validation/configuration failure (exit 2);
/// numeric failures (non-finite values, undefined correlations) exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape or configuration mismatch (dimension errors, bad checkpoints).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or out-of-range input data, with file/row context when known.
    #[error("{}", format_data_error(.path, .line, .field, .message))]
    Data {
        path: Option<PathBuf>,
        /// 1-based line number in the source file (line 1 is the header).
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },

    /// API misuse: empty batch, out-of-range schedule step, length mismatch.
    #[error("usage error: {0}")]
    Usage(String),

    /// Numeric failure: non-finite values, undefined correlation.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            path: None,
            line: None,
            field: None,
            message: message.into(),
        }
    }

    pub fn data_at(
        path: impl Into<PathBuf>,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Data {
            path: Some(path.into()),
            line: Some(line),
            field: Some(field.into()),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 3 for numeric failures, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

fn format_data_error(
    path: &Option<PathBuf>,
    line: &Option<usize>,
    field: &Option<String>,
    message: &str,
) -> String {
    let mut s = String::from("data error");
    if let Some(p) = path {
        s.push_str(&format!(" in {}", p.display()));
    }
    if let Some(l) = line {
        s.push_str(&format!(" at line {l}"));
    }
    if let Some(f) = field {
        s.push_str(&format!(" (field `{f}`)"));
    }
    s.push_str(": ");
    s.push_str(message);
    s
}

pub type Result<T> = std::result::Result<T, Error>;
