//! Cohort exclusion protocol, five-year labelling, imputation and the
//! level-merging linearization of non-monotone discrete attributes.

mod impute;
mod label;
mod linearize;
mod protocol;

pub use impute::{apply_imputation, fit_imputation, ImputationEntry, ImputationPlan, Statistic};
pub use label::{label_five_year, labels_for, SurvivalLabel};
pub use linearize::{
    apply_linearization, chi_square_2x2, fit_linearization, LevelStats, LinearizationEntry,
    LinearizationMap,
};
pub use protocol::{apply_protocol, AuditLog, AuditStep, ExclusionConfig};

use thiserror::Error;

use crate::tabular::TabularError;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid exclusion config: {0}")]
    Config(String),
    #[error("protocol step `{step}` left no {axis}")]
    Degenerate {
        step: String,
        axis: &'static str,
        audit: AuditLog,
    },
    #[error("attribute `{0}` has no present values to impute from")]
    NoPresentValues(String),
    #[error("fitted artifact does not match dataset: {0}")]
    Mismatch(String),
    #[error("{expected} patients but {found} labels")]
    LabelLength { expected: usize, found: usize },
    #[error(transparent)]
    Tabular(#[from] TabularError),
}
