use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sslr_core::Error),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("failed checks: {}", .0.join(", "))]
    Checks(Vec<String>),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_IO: i32 = 3;
    pub const EXIT_DIVERGENCE: i32 = 4;
    pub const EXIT_CHECKS: i32 = 5;

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Wav { .. } | Self::Format { .. } | Self::Csv { .. } => {
                Self::EXIT_IO
            }
            Self::Core(sslr_core::Error::Divergence { .. }) => Self::EXIT_DIVERGENCE,
            Self::Config(_) | Self::Core(_) => Self::EXIT_CONFIG,
            Self::Checks(_) => Self::EXIT_CHECKS,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
