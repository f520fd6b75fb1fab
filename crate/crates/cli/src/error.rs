use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error(transparent)]
    Core(#[from] ppe_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_SYNC: i32 = 5;

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use ppe_core::Error as E;
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::HeaderMismatch(_) => EXIT_SYNC,
            Self::Io { .. } => EXIT_IO,
            Self::Core(e) => match e {
                E::InvalidField(_) | E::InvalidLink(_) | E::InvalidSource(_) | E::InvalidParameter(_) => EXIT_CONFIG,
                E::GridMismatch(_) => EXIT_CONFIG,
                E::Singular { .. } | E::DegenerateScaling(_) => EXIT_SINGULAR,
                E::Sync(_) => EXIT_SYNC,
                E::Format(_) | E::Io(_) | E::Json(_) => EXIT_IO,
            },
        }
    }
}
