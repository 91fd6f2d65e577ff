use std::path::{Path, PathBuf};

use supcon_core::Error as CoreError;

/// Process exit codes, one per error class.
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const MISSING_ARTIFACT: i32 = 3;
    pub const IO: i32 = 4;
    pub const DATA: i32 = 5;
    pub const TRAINING: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("missing artifact {}: {reason}", path.display())]
    MissingArtifact { path: PathBuf, reason: String },
    #[error("manifest mismatch for {}: {reason}", path.display())]
    ManifestMismatch { path: PathBuf, reason: String },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, reason: impl std::fmt::Display) -> Self {
        Error::Format { path: path.as_ref().to_path_buf(), reason: reason.to_string() }
    }

    pub fn missing(path: impl AsRef<Path>, reason: impl Into<String>) -> Self {
        Error::MissingArtifact { path: path.as_ref().to_path_buf(), reason: reason.into() }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => exit::CONFIG,
            Error::MissingArtifact { .. } | Error::ManifestMismatch { .. } => exit::MISSING_ARTIFACT,
            Error::Io { .. } => exit::IO,
            Error::Format { .. } => exit::DATA,
            Error::Core(e) => match e {
                CoreError::InvalidConfig { .. } | CoreError::UnknownPolicy(_) => exit::CONFIG,
                CoreError::NonFiniteLoss { .. } | CoreError::NoPositives(_) => exit::TRAINING,
                CoreError::MalformedName(_)
                | CoreError::EmptyDataset
                | CoreError::DuplicateCoordinate { .. }
                | CoreError::PatientCountMismatch { .. }
                | CoreError::Overlap { .. }
                | CoreError::MixedPatients(..) => exit::DATA,
                _ => exit::OTHER,
            },
        }
    }
}
