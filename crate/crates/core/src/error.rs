use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading, validating or running a simulation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("network {network} has {orders} orders to generate but no clients")]
    NoClients { network: String, orders: u64 },

    #[error("calibration infeasible for carrier {carrier}: {reason}")]
    InfeasibleCalibration { carrier: String, reason: String },

    #[error("invalid calibration input: {0}")]
    Calibration(String),

    #[error("no reference orders for zone class {0}")]
    EmptyReference(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SimError::Validation(msg.into())
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
