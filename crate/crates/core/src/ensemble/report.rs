use serde::{Deserialize, Serialize};

use super::{
    agreement_filter, EnsembleError, PredictionClass, SelectiveDecision, SourcePredictions, Subset,
};
use crate::preprocess::SurvivalLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subset: Subset,
    pub n_patients: usize,
    pub n_correct: usize,
}

impl ReportRow {
    /// `None` when no patient was predicted.
    pub fn accuracy(&self) -> Option<f64> {
        (self.n_patients > 0).then(|| self.n_correct as f64 / self.n_patients as f64)
    }

    pub fn percent(&self) -> Option<String> {
        (self.n_patients > 0).then(|| format_percent(self.n_correct, self.n_patients))
    }
}

/// `correct / n` as a percentage with one decimal, rounded half up in exact
/// integer arithmetic.
pub fn format_percent(correct: usize, n: usize) -> String {
    assert!(n > 0, "percentage of an empty count");
    let tenths = (2000 * correct as u128 + n as u128) / (2 * n as u128);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub seed: Option<u64>,
    pub rows: Vec<ReportRow>,
}

impl AgreementReport {
    pub fn row(&self, subset: Subset) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset,n,correct,accuracy\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.subset,
                r.n_patients,
                r.n_correct,
                r.percent().unwrap_or_else(|| "NA".into())
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Counts, for every subset of sources, the patients on which those sources
/// agree and how many of those agreed predictions match the label.
pub fn build_report(
    preds: &[SourcePredictions],
    labels: &[SurvivalLabel],
) -> Result<AgreementReport, EnsembleError> {
    if preds.len() != labels.len() {
        return Err(EnsembleError::Alignment {
            predictions: preds.len(),
            labels: labels.len(),
        });
    }
    let truth = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| PredictionClass::from_label(l).ok_or(EnsembleError::ExcludedLabel(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(Subset::ALL.len());
    for subset in Subset::ALL {
        let mut row = ReportRow {
            subset,
            n_patients: 0,
            n_correct: 0,
        };
        for (p, &t) in preds.iter().zip(&truth) {
            if let SelectiveDecision::Predicted(c) =
                agreement_filter(&p.as_map(), subset.sources())?
            {
                row.n_patients += 1;
                row.n_correct += usize::from(c == t);
            }
        }
        rows.push(row);
    }
    Ok(AgreementReport { seed: None, rows })
}
