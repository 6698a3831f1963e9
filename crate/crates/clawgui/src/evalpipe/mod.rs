//! File-based evaluation pipeline: sharded resumable inference against a
//! chat-completions endpoint, then judge, metric and report stages that
//! are pure functions of their input files.

pub mod benchgen;
pub mod dataset;
pub mod infer;
pub mod mock;
pub mod stages;

pub use dataset::{load_dataset, write_dataset};
pub use benchgen::{generate, BenchGenConfig};
pub use infer::{infer, predict_sample, InferConfig, InferSummary};
pub use mock::GroundingMock;
pub use stages::{
    judge_predictions, judge_stage, load_official_table, metric_stage, read_predictions, report_stage, write_json,
    OfficialTable, TableCell,
};

use clawgui_core::eval::{MetricError, SampleError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("duplicate sample id {0}")]
    DuplicateSample(String),
    #[error("no prediction for sample {0}")]
    MissingPrediction(String),
    #[error("prediction for unknown sample {0}")]
    UnknownPrediction(String),
    #[error("image {path}: {message}")]
    Image { path: String, message: String },
    #[error("invalid setting: {0}")]
    Config(String),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.display().to_string(), source }
}
