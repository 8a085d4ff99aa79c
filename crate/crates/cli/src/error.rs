use dot_core::DotError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Some items failed; the rest were written.
    #[error("{done} of {total} items completed; missing: {}", missing.join(", "))]
    Partial {
        done: usize,
        total: usize,
        missing: Vec<String>,
    },
    #[error(transparent)]
    Core(#[from] DotError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plot: {0}")]
    Plot(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Partial { .. } => 2,
            _ => 3,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
