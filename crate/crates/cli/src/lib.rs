//! Command implementations behind the `policyforge` binary.

pub mod commands;
pub mod config;

use std::fmt;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

/// Bad arguments, unreadable or malformed inputs.
pub const EXIT_USAGE: i32 = 1;
/// The oracle or backend contradicted itself, or a check failed.
pub const EXIT_INCONSISTENT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    pub fn inconsistent(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: EXIT_INCONSISTENT,
            error: error.into(),
        }
    }

    pub fn budget(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: EXIT_BUDGET,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Failure {
        Failure::usage(error)
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;
