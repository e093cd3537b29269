use std::io;

use thiserror::Error;

pub const EX_USAGE: u8 = 64;
pub const EX_DATAERR: u8 = 65;
pub const EX_NOINPUT: u8 = 66;
pub const EX_SOFTWARE: u8 = 70;
pub const EX_IOERR: u8 = 74;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] sht_core::Error),

    #[error("cannot write {path}: {source}")]
    Write { path: String, source: io::Error },
}

impl CliError {
    /// Sysexits-style code; always at least 64.
    pub fn exit_code(&self) -> u8 {
        use sht_core::Error as E;
        match self {
            CliError::Usage(_) => EX_USAGE,
            CliError::Write { .. } => EX_IOERR,
            CliError::Core(e) => match e {
                E::Config(_) | E::Domain(_) => EX_USAGE,
                E::Parse { .. } | E::Json(_) | E::CalibrationMismatch(_) | E::OutsideCoverage { .. } => EX_DATAERR,
                E::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => EX_NOINPUT,
                E::Io { .. } => EX_IOERR,
                E::IllPosed { .. } | E::Resolution { .. } | E::NegativeDensity { .. } => EX_SOFTWARE,
            },
        }
    }
}
