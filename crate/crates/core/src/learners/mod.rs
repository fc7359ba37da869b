//! Trainable classifiers: a linear soft-margin SVM and a small sigmoid
//! feed-forward network trained by full-batch gradient descent.

mod mlp;
mod standardize;
mod svm;

pub use mlp::{
    export_weights, import_weights, loss_gradient, mean_cross_entropy, predict_mlp, train_mlp,
    train_mlp_traced, MlpConfig, MlpFile, MlpGradient, MlpModel,
};
pub use standardize::Standardizer;
pub(crate) use svm::solve_dual;
pub use svm::{
    predict_linear, svm_objective, train_linear_svm, train_linear_svm_traced, LinearModel,
    SvmConfig, SvmFit,
};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("training data is empty")]
    Empty,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {value} at index {index} is not valid for this learner")]
    InvalidLabel { index: usize, value: f64 },
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("loss became NaN at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("malformed model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Both learners' settings. Seeds are required; nothing draws from entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            svm: SvmConfig::new(seed),
            mlp: MlpConfig::new(seed),
        }
    }
}

pub(crate) fn check_features(x: ArrayView2<'_, f64>) -> Result<(), LearnError> {
    if x.nrows() == 0 {
        return Err(LearnError::Empty);
    }
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(LearnError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Checks that `y` uses exactly the two label values `(neg, pos)`, both present.
pub(crate) fn check_binary_labels(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    neg: f64,
    pos: f64,
) -> Result<(), LearnError> {
    check_features(x)?;
    if y.len() != x.nrows() {
        return Err(LearnError::LabelCount {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, &v)| v != neg && v != pos) {
        return Err(LearnError::InvalidLabel { index, value });
    }
    if !(y.contains(&neg) && y.contains(&pos)) {
        return Err(LearnError::SingleClass);
    }
    Ok(())
}
