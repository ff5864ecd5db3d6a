use std::path::PathBuf;

use thiserror::Error;

use crate::observables::DiagnosticsRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range; `field` names the offender.
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    /// Malformed command line.
    #[error("{0}")]
    Usage(String),

    #[error("unknown initial-condition family `{0}` (expected gaussian, ring, osc-gaussian or table)")]
    UnknownFamily(String),

    #[error("output directory {path} is not writable: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported dimension {0}: the Bessel kernel needs a half-integer order (odd dimension >= 3)")]
    UnsupportedDimension(i64),

    /// The field went non-finite during a step starting at `t`.
    #[error("numerical instability in step starting at t = {t}: max |u| before the step was {max_abs}")]
    Instability {
        t: f64,
        max_abs: f64,
        last_record: Option<Box<DiagnosticsRecord>>,
    },

    #[error("decay-rate fit failed: {0}")]
    Fit(String),

    #[error("initial-condition table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// instability, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Usage(_)
            | Error::UnknownFamily(_)
            | Error::OutputDir { .. }
            | Error::UnsupportedDimension(_)
            | Error::Table(_) => 2,
            Error::Instability { .. } => 3,
            _ => 1,
        }
    }
}
