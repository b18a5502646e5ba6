//! Reproducible experiment harness wiring data, model, training, and
//! evaluation together: single trainings, five-fold cross-validation, the
//! six-variant ablation grid, statistical comparisons between runs, and ROC
//! export.
//!
//! Every output artifact embeds the SHA-256 digest of the experiment config
//! that produced it, and identical configs reproduce identical output bytes.

pub mod checkpoint;
pub mod config;
pub mod run;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{DataSource, ExperimentConfig, TrainParams, ValidationMode};
pub use run::{
    run_ablation, run_compare, run_crossval, run_eval, run_roc, run_synth, run_train,
    AblationTable, CompareMode, CrossvalOutput, SynthSummary, TrainOutput,
};
pub use train::{predict, predict_full, train_model, EpochLog, TrainOutcome};

use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::losses::LossError;
use crate::mining::MiningError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("incompatible runs: {0}")]
    Incompatible(String),
}

impl ExperimentError {
    /// Process exit code contract: 2 config/data problems, 3 divergence,
    /// 4 incompatible comparison.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Divergence { .. } => 3,
            ExperimentError::Incompatible(_) => 4,
            _ => 2,
        }
    }
}
