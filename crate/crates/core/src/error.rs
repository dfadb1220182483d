use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite ({context})")]
    NotSpd { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series too short: {usable} usable rows, need at least {required}")]
    SeriesTooShort { usable: usize, required: usize },

    #[error("design matrix is rank deficient at column {column} (|R_jj| = {pivot:e})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("gibbs sampler failed at draw {draw}: {source}")]
    GibbsDraw {
        draw: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} trials failed (limit {limit})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: usize,
    },

    #[error("malformed input {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn not_spd(context: impl Into<String>) -> Self {
        Error::NotSpd {
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the numerics rather than in
    /// user input or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSpd { .. }
                | Error::RankDeficient { .. }
                | Error::GibbsDraw { .. }
                | Error::TooManyFailures { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
