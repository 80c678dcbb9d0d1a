//! Crate-wide error type.
//!
//! Each module owns a narrow error enum; [`Error`] wraps them so callers that
//! cross module boundaries (trainers, the harness, the CLI) can use `?` freely.
//! [`Error::category`] maps every failure onto the CLI's exit-code classes.

use thiserror::Error;

use crate::baselines::ControllerError;
use crate::expert::ExpertError;
use crate::mlp::MlpError;
use crate::qoe::QoeError;
use crate::sim::SimError;
use crate::trace::TraceError;
use crate::train::TrainError;
use crate::video::VideoError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Runtime,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Runtime => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Qoe(#[from] QoeError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) => Category::Config,
            Error::Trace(_) | Error::Video(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => {
                Category::Data
            }
            Error::Qoe(QoeError::NonFiniteEntry { .. }) => Category::Data,
            Error::Mlp(MlpError::Format(_)) => Category::Data,
            _ => Category::Runtime,
        }
    }
}
