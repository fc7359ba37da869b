use serde::{Deserialize, Serialize};

use crate::tabular::{OutcomeRecord, VitalStatus};

/// Five-year outcome class of a patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalLabel {
    Survived,
    Died,
    /// Follow-up too short, or death from another cause.
    Excluded,
}

impl SurvivalLabel {
    pub fn is_labelled(self) -> bool {
        self != SurvivalLabel::Excluded
    }
}

/// Labels an outcome against a survival horizon in months.
///
/// A disease death at or after the horizon counts as survival: the label
/// depends only on being alive at the horizon.
pub fn label_five_year(o: &OutcomeRecord, threshold: u32) -> SurvivalLabel {
    let reached = o.survival_months >= threshold;
    match (o.vital_status, reached) {
        (VitalStatus::Alive, true) | (VitalStatus::DeadOfDisease, true) => SurvivalLabel::Survived,
        (VitalStatus::DeadOfDisease, false) => SurvivalLabel::Died,
        (VitalStatus::Alive, false) | (VitalStatus::DeadOther, _) => SurvivalLabel::Excluded,
    }
}

pub fn labels_for(outcomes: &[OutcomeRecord], threshold: u32) -> Vec<SurvivalLabel> {
    outcomes
        .iter()
        .map(|o| label_five_year(o, threshold))
        .collect()
}
