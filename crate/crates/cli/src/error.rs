use std::fmt;

use dsid_core::dataio::DataError;
use dsid_core::netcore::CheckpointError;
use dsid_core::DsidError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Io = 1,
    InvalidArgs = 2,
    DataInvariant = 3,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Io,
            message: message.into(),
        }
    }

    pub fn args(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::InvalidArgs,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::DataInvariant,
            message: message.into(),
        }
    }

    pub fn with_context(mut self, context: impl fmt::Display) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => Self::io(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(_) => Self::io(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<DsidError> for CliError {
    fn from(e: DsidError) -> Self {
        match e {
            DsidError::Data(d) => d.into(),
            DsidError::InvalidConfig(_) | DsidError::UnknownSubject(_) => Self::args(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
