use thiserror::Error;

use crate::formal::FormalError;
use crate::harness::HarnessError;
use crate::indices::IndexError;
use crate::modeode::ModeOdeError;
use crate::series::SeriesError;
use crate::spectral::SpectralError;

/// Crate-level error, tagged by the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[phgseries] {0}")]
    Series(#[from] SeriesError),
    #[error("[spectral] {0}")]
    Spectral(#[from] SpectralError),
    #[error("[indices] {0}")]
    Indices(#[from] IndexError),
    #[error("[formal] {0}")]
    Formal(#[from] FormalError),
    #[error("[modeode] {0}")]
    ModeOde(#[from] ModeOdeError),
    #[error("[harness] {0}")]
    Harness(#[from] HarnessError),
}

/// Process exit codes used by the `phg` binary.
pub mod exit_code {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILURE: i32 = 1;
    pub const INPUT_ERROR: i32 = 2;
    pub const NUMERICAL_FAILURE: i32 = 3;
}

impl Error {
    /// Maps an error onto the input-error / numerical-failure split of the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Harness(_) => exit_code::INPUT_ERROR,
            Error::Spectral(SpectralError::SolvabilityViolation { .. }) => exit_code::NUMERICAL_FAILURE,
            Error::Spectral(_) | Error::Indices(_) | Error::Series(SeriesError::Json(_)) => exit_code::INPUT_ERROR,
            Error::Formal(FormalError::InvalidProblem(_))
            | Error::ModeOde(ModeOdeError::InvalidGrid(_) | ModeOdeError::BoundaryData { .. }) => {
                exit_code::INPUT_ERROR
            }
            Error::Series(_) | Error::Formal(_) | Error::ModeOde(_) => exit_code::NUMERICAL_FAILURE,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
