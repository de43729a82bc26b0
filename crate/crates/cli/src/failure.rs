use std::fmt;
use std::process::ExitCode;

use mmimo_core::cht::ChtError;
use mmimo_core::Error;

/// A run that could not complete, with the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, presets or parameter values (exit 2).
    Config(anyhow::Error),
    /// Unreadable or unusable data (exit 3).
    Data(anyhow::Error),
}

impl Failure {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self::Config(e.into())
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self::Data(e.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) => ExitCode::from(2),
            Self::Data(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e:#}"),
            Self::Data(e) => write!(f, "data error: {e:#}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidDims(_)
            | Error::EmptySubset
            | Error::AntennaIndex { .. }
            | Error::DuplicateAntenna(_)
            | Error::SubsetTooLarge { .. }
            | Error::SubsetMismatch
            | Error::MaskLength { .. }
            | Error::InvalidParameter(_) => Self::config(e),
            _ => Self::data(e),
        }
    }
}

impl From<ChtError> for Failure {
    fn from(e: ChtError) -> Self {
        let code = e.code();
        Self::Data(anyhow::Error::new(e).context(format!("CHT {code}")))
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
