//! Library half of the `congest` binary: configuration, file formats,
//! run manifests, and one module per subcommand.
//!
//! Everything numerical lives in `congest-core`; this crate only parses,
//! serializes, and orchestrates. Commands report failures through
//! [`Failure`], which carries the process exit code: validation problems
//! (bad flags, malformed configs, missing inputs) exit with 1, failures in
//! the middle of a run (diverging solvers, unwritable outputs) with 2.

pub mod config;
pub mod formats;
pub mod manifest;
pub mod commands;

use std::fmt;

/// A command failure, split by who is at fault: the invocation (validation)
/// or the run itself (runtime).
#[derive(Debug)]
pub enum Failure {
    /// The invocation was wrong: unknown keys, malformed files, missing
    /// inputs, inconsistent settings. Exit code 1.
    Validation(anyhow::Error),
    /// The run started but could not finish: numerical failure, IO errors
    /// while writing artifacts. Exit code 2.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => e,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error())
    }
}

impl std::error::Error for Failure {}

/// Wrap an error as a validation failure (exit 1).
pub fn validation<E: Into<anyhow::Error>>(err: E) -> Failure {
    Failure::Validation(err.into())
}

/// Wrap an error as a runtime failure (exit 2).
pub fn runtime<E: Into<anyhow::Error>>(err: E) -> Failure {
    Failure::Runtime(err.into())
}

/// Shorthand for command results carrying an exit classification.
pub type CliResult<T> = Result<T, Failure>;

impl From<congest_core::Error> for Failure {
    /// Core errors sort by variant: structural and configuration errors are
    /// validation, errors that can only arise mid-computation are runtime.
    fn from(err: congest_core::Error) -> Self {
        use congest_core::Error::*;
        match err {
            NonFinite { .. } | DegenerateCoupling { .. } | NonScalarLoss { .. } => {
                Failure::Runtime(err.into())
            }
            ShapeMismatch { .. }
            | DimMismatch { .. }
            | InvalidWeights { .. }
            | InvalidScene { .. }
            | InvalidDataset(_)
            | InvalidCoupling(_)
            | LatentDimMismatch { .. }
            | InvalidConfig(_)
            | PredictionMismatch(_) => Failure::Validation(err.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_failure_kind() {
        assert_eq!(validation(anyhow::anyhow!("bad flag")).exit_code(), 1);
        assert_eq!(runtime(anyhow::anyhow!("diverged")).exit_code(), 2);
    }

    #[test]
    fn core_errors_classify_by_variant() {
        let config = congest_core::Error::InvalidConfig("x".into());
        assert_eq!(Failure::from(config).exit_code(), 1);
        let diverged = congest_core::Error::NonFinite { op: "em", iteration: 3 };
        assert_eq!(Failure::from(diverged).exit_code(), 2);
    }

    #[test]
    fn display_shows_the_underlying_chain() {
        let err = validation(anyhow::anyhow!("inner").context("outer"));
        let text = err.to_string();
        assert!(text.contains("outer") && text.contains("inner"), "{text}");
    }
}
