//! Kaplan-Meier product-limit curves.

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{OutcomeRecord, VitalStatus};

#[derive(Debug, Error, PartialEq)]
pub enum SurvivalError {
    #[error("no outcomes to estimate from")]
    Empty,
    #[error("{outcomes} outcomes but {groups} group keys")]
    GroupCount { outcomes: usize, groups: usize },
}

/// `event` is a disease death at `time`; otherwise the patient is censored there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedOutcome {
    pub time: u32,
    pub event: bool,
}

impl TimedOutcome {
    /// Deaths from other causes are censored.
    pub fn from_record(r: &OutcomeRecord) -> Self {
        TimedOutcome {
            time: r.survival_months,
            event: r.vital_status == VitalStatus::DeadOfDisease,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: u32,
    pub at_risk: usize,
    pub deaths: usize,
    pub survival: f64,
}

/// Steps at event times only; S(t) = 1 before the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub subjects: usize,
    pub steps: Vec<KmStep>,
}

pub fn km_estimate(outcomes: &[TimedOutcome]) -> Result<KmCurve, SurvivalError> {
    if outcomes.is_empty() {
        return Err(SurvivalError::Empty);
    }
    let mut sorted = outcomes.to_vec();
    sorted.sort_by_key(|o| o.time);
    let mut steps = Vec::new();
    let mut survival = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let time = sorted[i].time;
        let at_risk = sorted.len() - i;
        let tied = sorted[i..].iter().take_while(|o| o.time == time).count();
        let deaths = sorted[i..i + tied].iter().filter(|o| o.event).count();
        if deaths > 0 {
            survival *= 1.0 - deaths as f64 / at_risk as f64;
            steps.push(KmStep {
                time,
                at_risk,
                deaths,
                survival,
            });
        }
        i += tied;
    }
    Ok(KmCurve {
        subjects: outcomes.len(),
        steps,
    })
}

/// Value of the step function at `t`.
pub fn survival_rate_at(curve: &KmCurve, t: f64) -> f64 {
    curve
        .steps
        .iter()
        .take_while(|s| f64::from(s.time) <= t)
        .last()
        .map_or(1.0, |s| s.survival)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedCurves<K> {
    pub curves: BTreeMap<K, KmCurve>,
    /// One line per expected group that had no patients.
    pub warnings: Vec<String>,
}

/// Independent curves per group key, ordered by key. Keys listed in
/// `expected` but absent from `groups` are reported as warnings.
pub fn km_by_group<K: Ord + Clone + Display>(
    outcomes: &[TimedOutcome],
    groups: &[K],
    expected: &[K],
) -> Result<GroupedCurves<K>, SurvivalError> {
    if outcomes.len() != groups.len() {
        return Err(SurvivalError::GroupCount {
            outcomes: outcomes.len(),
            groups: groups.len(),
        });
    }
    let mut members: BTreeMap<K, Vec<TimedOutcome>> = BTreeMap::new();
    for (o, g) in outcomes.iter().zip(groups) {
        members.entry(g.clone()).or_default().push(*o);
    }
    let warnings = expected
        .iter()
        .filter(|k| !members.contains_key(k))
        .map(|k| format!("group {k} has no patients; curve omitted"))
        .collect();
    let curves = members
        .into_iter()
        .map(|(k, v)| km_estimate(&v).map(|c| (k, c)))
        .collect::<Result<_, _>>()?;
    Ok(GroupedCurves { curves, warnings })
}

/// `group,time,at_risk,deaths,survival` with a leading t = 0 row per group.
/// Steps after `horizon` are dropped.
pub fn curves_to_csv<K: Display>(curves: &BTreeMap<K, KmCurve>, horizon: Option<u32>) -> String {
    let mut out = String::from("group,time,at_risk,deaths,survival\n");
    for (key, curve) in curves {
        let steps = curve
            .steps
            .iter()
            .filter(|s| horizon.is_none_or(|h| s.time <= h));
        if curve.steps.first().is_none_or(|s| s.time > 0) {
            out.push_str(&format!("{key},0,{},0,1\n", curve.subjects));
        }
        for s in steps {
            out.push_str(&format!(
                "{key},{},{},{},{}\n",
                s.time, s.at_risk, s.deaths, s.survival
            ));
        }
    }
    out
}
