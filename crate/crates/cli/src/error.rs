use thiserror::Error;

/// A malformed input file, located by byte offset (SPB1) or line (CSV).
#[derive(Debug, Error)]
#[error("offset {offset}: {message}")]
pub struct FormatError {
    pub offset: u64,
    pub message: String,
}

impl FormatError {
    pub fn new(offset: u64, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Format(#[from] FormatError),
    #[error("malformed csv: {0}")]
    Csv(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Format(_) | CliError::Csv(_) => 4,
        }
    }

    /// Adds the path to I/O and format failures.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            CliError::Io(e) => CliError::Io(std::io::Error::new(e.kind(), format!("{p}: {e}"))),
            CliError::Format(e) => CliError::Format(FormatError::new(e.offset, format!("{p}: {}", e.message))),
            CliError::Csv(m) => CliError::Csv(format!("{p}: {m}")),
            other => other,
        }
    }
}

impl From<spotfit_core::Error> for CliError {
    fn from(e: spotfit_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => CliError::Io(io),
                other => CliError::Csv(format!("{other:?}")),
            }
        } else {
            CliError::Csv(e.to_string())
        }
    }
}
