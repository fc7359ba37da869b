//! Merging the levels of a discrete attribute into a favourable ('1') and an
//! unfavourable ('0') group, so that an attribute whose survival rate is not
//! monotone in its level becomes a single binary indicator.
//!
//! Levels are sorted by observed survival rate (descending, ties to the lower
//! level); every prefix of that order is a candidate '1' group and the prefix
//! with the largest 2×2 chi-square statistic wins (ties to the shorter
//! prefix). Declared levels with no labelled patient take the group of the
//! nearest observed level by level distance, ties to the lower level.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PreprocessError, SurvivalLabel};
use crate::tabular::{replace_columns, AttributeKind, AttributeSpec, Cell, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub patients: usize,
    pub survived: usize,
    /// `None` when no labelled patient has this level.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationEntry {
    pub attribute: String,
    /// Level → group (1 = higher survival), total over declared levels.
    pub mapping: BTreeMap<u32, u8>,
    pub levels: Vec<LevelStats>,
    pub chi_square: f64,
    /// Declared levels without labelled patients, mapped by proximity.
    pub unobserved_levels: Vec<u32>,
}

impl LinearizationEntry {
    /// Group of `level`, falling back to the nearest mapped level.
    pub fn group_of(&self, level: u32) -> u8 {
        if let Some(&g) = self.mapping.get(&level) {
            return g;
        }
        self.mapping
            .iter()
            .min_by_key(|(&l, _)| (l.abs_diff(level), l))
            .map(|(_, &g)| g)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearizationMap {
    pub entries: Vec<LinearizationEntry>,
}

impl LinearizationMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, attribute: &str) -> Option<&LinearizationEntry> {
        self.entries.iter().find(|e| e.attribute == attribute)
    }
}

/// Pearson chi-square (no continuity correction) of the table
/// `[[a, b], [c, d]]`; 0 when any margin is empty.
pub fn chi_square_2x2(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let n = a + b + c + d;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return 0.0;
    }
    let cross = a * d - b * c;
    n * cross * cross / denom
}

/// Fits merges for every ordinal or categorical attribute with at least
/// three levels observed among labelled patients. Excluded patients and
/// missing cells are ignored.
pub fn fit_linearization(
    ds: &Dataset,
    labels: &[SurvivalLabel],
) -> Result<LinearizationMap, PreprocessError> {
    if labels.len() != ds.n_patients() {
        return Err(PreprocessError::LabelLength {
            expected: ds.n_patients(),
            found: labels.len(),
        });
    }
    let mut entries = Vec::new();
    for (j, spec) in ds.attributes().iter().enumerate() {
        let levels = match spec.kind {
            AttributeKind::Ordinal { levels } | AttributeKind::Categorical { levels } => levels,
            _ => continue,
        };
        let mut tally = vec![(0usize, 0usize); levels as usize];
        for (cell, label) in ds.column(j).zip(labels) {
            let (Some(v), true) = (cell.value(), label.is_labelled()) else {
                continue;
            };
            let t = &mut tally[v as usize];
            t.0 += 1;
            if *label == SurvivalLabel::Survived {
                t.1 += 1;
            }
        }
        if let Some(entry) = fit_one(&spec.name, &tally) {
            entries.push(entry);
        }
    }
    Ok(LinearizationMap { entries })
}

fn fit_one(name: &str, tally: &[(usize, usize)]) -> Option<LinearizationEntry> {
    let stats: Vec<LevelStats> = tally
        .iter()
        .enumerate()
        .map(|(l, &(patients, survived))| LevelStats {
            level: l as u32,
            patients,
            survived,
            rate: (patients > 0).then(|| survived as f64 / patients as f64),
        })
        .collect();
    let mut observed: Vec<&LevelStats> = stats.iter().filter(|s| s.rate.is_some()).collect();
    if observed.len() < 3 {
        return None;
    }
    observed.sort_by(|x, y| {
        y.rate
            .unwrap()
            .total_cmp(&x.rate.unwrap())
            .then(x.level.cmp(&y.level))
    });

    let total_n: usize = observed.iter().map(|s| s.patients).sum();
    let total_s: usize = observed.iter().map(|s| s.survived).sum();
    let mut best = (0usize, f64::NEG_INFINITY);
    let (mut n1, mut s1) = (0usize, 0usize);
    for (p, s) in observed.iter().enumerate().take(observed.len() - 1) {
        n1 += s.patients;
        s1 += s.survived;
        let chi = chi_square_2x2(s1, n1 - s1, total_s - s1, (total_n - n1) - (total_s - s1));
        if chi > best.1 {
            best = (p + 1, chi);
        }
    }

    let mut mapping: BTreeMap<u32, u8> = observed
        .iter()
        .enumerate()
        .map(|(rank, s)| (s.level, u8::from(rank < best.0)))
        .collect();
    let unobserved: Vec<u32> = stats
        .iter()
        .filter(|s| s.rate.is_none())
        .map(|s| s.level)
        .collect();
    let observed_map = mapping.clone();
    for &level in &unobserved {
        let (_, &g) = observed_map
            .iter()
            .min_by_key(|(&l, _)| (l.abs_diff(level), l))
            .expect("at least three observed levels");
        mapping.insert(level, g);
    }

    Some(LinearizationEntry {
        attribute: name.to_string(),
        mapping,
        levels: stats,
        chi_square: best.1,
        unobserved_levels: unobserved,
    })
}

/// Rewrites every mapped attribute as a binary group indicator.
pub fn apply_linearization(
    ds: &Dataset,
    map: &LinearizationMap,
) -> Result<Dataset, PreprocessError> {
    if map.is_empty() {
        return Ok(ds.clone());
    }
    let mut attributes = ds.attributes().to_vec();
    let mut mapped: Vec<Option<&LinearizationEntry>> = vec![None; attributes.len()];
    for entry in &map.entries {
        let j = ds.attribute_index(&entry.attribute).ok_or_else(|| {
            PreprocessError::Mismatch(format!("attribute `{}` not in dataset", entry.attribute))
        })?;
        if !matches!(
            attributes[j].kind,
            AttributeKind::Ordinal { .. } | AttributeKind::Categorical { .. }
        ) {
            return Err(PreprocessError::Mismatch(format!(
                "attribute `{}` is not ordinal or categorical",
                entry.attribute
            )));
        }
        attributes[j] = AttributeSpec {
            kind: AttributeKind::Binary,
            ..attributes[j].clone()
        };
        mapped[j] = Some(entry);
    }
    let rows = ds
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mapped)
                .map(|(c, m)| match (c, m) {
                    (Cell::Present(v), Some(entry)) => {
                        Cell::Present(f64::from(entry.group_of(*v as u32)))
                    }
                    _ => *c,
                })
                .collect()
        })
        .collect();
    Ok(replace_columns(ds, attributes, rows)?)
}
