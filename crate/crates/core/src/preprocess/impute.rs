use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::tabular::{replace_columns, AttributeKind, Cell, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationEntry {
    pub attribute: String,
    pub statistic: Statistic,
    pub fill: f64,
}

/// Per-attribute fill values, in dataset column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationPlan {
    pub entries: Vec<ImputationEntry>,
}

impl ImputationPlan {
    pub fn fill_for(&self, attribute: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.attribute == attribute)
            .map(|e| e.fill)
    }
}

/// Fits fill values from present cells: mean for continuous attributes,
/// median (half-up to a valid level) for ordinal ones, mode (ties to the
/// smaller level) for binary and categorical ones.
pub fn fit_imputation(ds: &Dataset) -> Result<ImputationPlan, PreprocessError> {
    let entries = ds
        .attributes()
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let values: Vec<f64> = ds.column(j).filter_map(Cell::value).collect();
            if values.is_empty() {
                return Err(PreprocessError::NoPresentValues(spec.name.clone()));
            }
            let (statistic, fill) = match spec.kind {
                AttributeKind::Continuous => (Statistic::Mean, mean(&values)),
                AttributeKind::Ordinal { .. } => (Statistic::Median, median_level(values)),
                AttributeKind::Binary | AttributeKind::Categorical { .. } => {
                    (Statistic::Mode, mode_level(&values))
                }
            };
            debug_assert!(spec.kind.admits(fill));
            Ok(ImputationEntry {
                attribute: spec.name.clone(),
                statistic,
                fill,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(ImputationPlan { entries })
}

/// Replaces every missing cell with its attribute's fill value.
pub fn apply_imputation(ds: &Dataset, plan: &ImputationPlan) -> Result<Dataset, PreprocessError> {
    if plan.entries.len() != ds.n_attributes()
        || plan
            .entries
            .iter()
            .zip(ds.attributes())
            .any(|(e, a)| e.attribute != a.name)
    {
        return Err(PreprocessError::Mismatch(
            "imputation plan attributes differ from dataset attributes".into(),
        ));
    }
    let rows = ds
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&plan.entries)
                .map(|(c, e)| match c {
                    Cell::Missing => Cell::Present(e.fill),
                    present => *present,
                })
                .collect()
        })
        .collect();
    Ok(replace_columns(ds, ds.attributes().to_vec(), rows)?)
}

/// Mean rounded as if computed exactly, so that refitting on a column filled
/// with its own mean reproduces that mean bit-for-bit.
fn mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m1 = exact_sum(values.iter().copied()) / n;
    // x - m1 split exactly into hi + lo
    let residuals = values.iter().flat_map(|&x| {
        let hi = x - m1;
        let bp = hi - x;
        let lo = (x - (hi - bp)) + (-m1 - bp);
        [hi, lo]
    });
    m1 + exact_sum(residuals) / n
}

/// Sum with a single final rounding (Shewchuk's non-overlapping partials).
fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    partials.iter().rev().fold(0.0, |acc, p| acc + p)
}

fn median_level(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mid = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    // half-up; the midpoint of two integer levels is a valid level once rounded
    (mid + 0.5).floor()
}

fn mode_level(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (sorted[0], 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let run = sorted[i..].iter().take_while(|&&x| x == v).count();
        if run > best.1 {
            best = (v, run);
        }
        i += run;
    }
    best.0
}
