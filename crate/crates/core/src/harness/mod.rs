//! Experiment driver: dataset generation, training, combo evaluation,
//! hyper-parameter sweeps and curve export.

mod config;
mod eval;
mod plot;
mod sweep;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::regularizers::RegError;

pub use config::{Config, SplitConfig, TrainConfig};
pub use eval::{cmd_eval, evaluate_combos, format_table, write_table, EvalSummary};
pub use plot::{cmd_plotdata, PlotFiles};
pub use sweep::{cmd_sweep, format_sweep_table, SweepAxis, SweepRow};
pub use train::{cmd_generate, cmd_train, TrainOutcome, CHECKPOINT_FILE, METRICS_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reg(#[from] RegError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss at step {step}; last Fisher report: {report}")]
    NonFinite { step: u64, report: String },
    #[error("modality mismatch: checkpoint has [{checkpoint}], dataset has [{dataset}]")]
    ModalityMismatch { checkpoint: String, dataset: String },
    #[error("{path}:{line}: {msg}")]
    Metric { path: PathBuf, line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}
