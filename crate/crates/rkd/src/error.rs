use std::path::{Path, PathBuf};

/// Malformed file contents, located by byte offset.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at byte {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(offset: usize, message: String) -> Self {
        FormatError { offset, message }
    }

    pub fn in_file(self, path: &Path) -> Error {
        Error::Format { path: path.to_path_buf(), source: self }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed file {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] rkd_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// 1 for configuration and usage problems, 2 for data, file and
    /// numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 1,
            Error::Core(rkd_core::Error::Config(_) | rkd_core::Error::Parameter(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
