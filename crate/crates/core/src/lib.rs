//! Monte Carlo simulation and analysis of Compton polarimetry on
//! annihilation photon pairs: Klein–Nishina scattering, pair-state models,
//! a parametric two-arm apparatus, and azimuthal-correlation analysis.

// `!(a > b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use thiserror::Error;

pub mod analysis;
pub mod apparatus;
pub mod compton;
pub mod config;
pub mod geometry;
pub mod output;
pub mod pair;
pub mod run;

/// Top-level error for runs and command-line use.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Domain(#[from] compton::DomainError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for invalid input, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Runtime(_) => 2,
            _ => 1,
        }
    }
}
