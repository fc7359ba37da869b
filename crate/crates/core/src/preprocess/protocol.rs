use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::tabular::{
    coverage_by_attribute, coverage_by_patient, select, Dataset, Role, VitalStatus,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExclusionConfig {
    /// Patients with a smaller fraction of present attributes are removed.
    pub min_patient_coverage: f64,
    /// Attributes present for a smaller fraction of patients are removed.
    pub min_attribute_coverage: f64,
    pub survival_threshold_months: u32,
    pub drop_roles: BTreeSet<Role>,
    /// Attributes removed by name (derivable attributes known a priori).
    pub drop_attributes: Vec<String>,
    /// When set, of any attribute pair with |Pearson r| above this value the
    /// later one is removed. Off by default.
    pub correlation_threshold: Option<f64>,
}

impl Default for ExclusionConfig {
    fn default() -> Self {
        ExclusionConfig {
            min_patient_coverage: 0.5,
            min_attribute_coverage: 0.5,
            survival_threshold_months: 60,
            drop_roles: [Role::TnmDerived, Role::PostOperative, Role::Compound]
                .into_iter()
                .collect(),
            drop_attributes: Vec::new(),
            correlation_threshold: None,
        }
    }
}

impl ExclusionConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.min_patient_coverage) || !in_unit(self.min_attribute_coverage) {
            return Err(PreprocessError::Config(
                "coverage thresholds must lie in (0, 1]".into(),
            ));
        }
        if self.survival_threshold_months == 0 {
            return Err(PreprocessError::Config(
                "survival threshold must be positive".into(),
            ));
        }
        if let Some(r) = self.correlation_threshold {
            if !in_unit(r) {
                return Err(PreprocessError::Config(
                    "correlation threshold must lie in (0, 1]".into(),
                ));
            }
        }
        if self.drop_roles.contains(&Role::Outcome) {
            return Err(PreprocessError::Config(
                "outcome columns cannot be dropped".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditStep {
    pub step: String,
    pub patients_removed: usize,
    pub attributes_removed: usize,
    pub patients_left: usize,
    pub attributes_left: usize,
}

/// Per-step record of what the protocol removed. The first row is the input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLog {
    pub steps: Vec<AuditStep>,
}

impl AuditLog {
    pub(crate) fn record(&mut self, step: &str, ds: &Dataset) {
        let (p0, a0) = self
            .steps
            .last()
            .map_or((ds.n_patients(), ds.n_attributes()), |s| {
                (s.patients_left, s.attributes_left)
            });
        self.steps.push(AuditStep {
            step: step.to_string(),
            patients_removed: p0 - ds.n_patients(),
            attributes_removed: a0 - ds.n_attributes(),
            patients_left: ds.n_patients(),
            attributes_left: ds.n_attributes(),
        });
    }

    pub fn step(&self, name: &str) -> Option<&AuditStep> {
        self.steps.iter().find(|s| s.step == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,patients_removed,attributes_removed,patients_left,attributes_left\n",
        );
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.step,
                s.patients_removed,
                s.attributes_removed,
                s.patients_left,
                s.attributes_left
            );
        }
        out
    }
}

/// Runs the exclusion protocol in order:
///
/// 1. patients with attribute coverage below `min_patient_coverage`;
/// 2. attributes with patient coverage below `min_attribute_coverage`;
/// 3. patients alive with follow-up shorter than the threshold;
/// 4. patients dead of other causes before the threshold;
/// 5. attributes carrying any of `drop_roles`;
/// 6. attributes listed in `drop_attributes`;
/// 7. highly correlated attributes, when enabled.
pub fn apply_protocol(
    ds: &Dataset,
    cfg: &ExclusionConfig,
) -> Result<(Dataset, AuditLog), PreprocessError> {
    cfg.validate()?;
    let mut audit = AuditLog::default();
    audit.record("input", ds);
    let mut cur = ds.clone();

    let step =
        |name: &str, next: Dataset, audit: &mut AuditLog| -> Result<Dataset, PreprocessError> {
            audit.record(name, &next);
            let axis = if next.n_patients() == 0 {
                Some("patients")
            } else if next.n_attributes() == 0 {
                Some("attributes")
            } else {
                None
            };
            match axis {
                Some(axis) => Err(PreprocessError::Degenerate {
                    step: name.to_string(),
                    axis,
                    audit: audit.clone(),
                }),
                None => Ok(next),
            }
        };

    let all_attrs = |d: &Dataset| vec![true; d.n_attributes()];
    let all_patients = |d: &Dataset| vec![true; d.n_patients()];

    let keep: Vec<bool> = coverage_by_patient(&cur)
        .into_iter()
        .map(|c| c >= cfg.min_patient_coverage)
        .collect();
    cur = step(
        "patient_coverage",
        select(&cur, &keep, &all_attrs(&cur))?,
        &mut audit,
    )?;

    let keep: Vec<bool> = coverage_by_attribute(&cur)?
        .into_iter()
        .map(|c| c >= cfg.min_attribute_coverage)
        .collect();
    cur = step(
        "attribute_coverage",
        select(&cur, &all_patients(&cur), &keep)?,
        &mut audit,
    )?;

    let threshold = cfg.survival_threshold_months;
    let keep: Vec<bool> = cur
        .outcomes()
        .iter()
        .map(|o| !(o.vital_status == VitalStatus::Alive && o.survival_months < threshold))
        .collect();
    cur = step(
        "alive_short_followup",
        select(&cur, &keep, &all_attrs(&cur))?,
        &mut audit,
    )?;

    let keep: Vec<bool> = cur
        .outcomes()
        .iter()
        .map(|o| !(o.vital_status == VitalStatus::DeadOther && o.survival_months < threshold))
        .collect();
    cur = step(
        "dead_other_early",
        select(&cur, &keep, &all_attrs(&cur))?,
        &mut audit,
    )?;

    let keep: Vec<bool> = cur
        .attributes()
        .iter()
        .map(|a| a.roles.is_disjoint(&cfg.drop_roles))
        .collect();
    cur = step(
        "drop_roles",
        select(&cur, &all_patients(&cur), &keep)?,
        &mut audit,
    )?;

    let keep: Vec<bool> = cur
        .attributes()
        .iter()
        .map(|a| !cfg.drop_attributes.contains(&a.name))
        .collect();
    cur = step(
        "drop_listed",
        select(&cur, &all_patients(&cur), &keep)?,
        &mut audit,
    )?;

    if let Some(limit) = cfg.correlation_threshold {
        let keep = uncorrelated_mask(&cur, limit);
        cur = step(
            "drop_correlated",
            select(&cur, &all_patients(&cur), &keep)?,
            &mut audit,
        )?;
    }

    Ok((cur, audit))
}

/// Greedy filter over attribute pairs in column order: an attribute is
/// dropped when it correlates above `limit` with an earlier kept one.
fn uncorrelated_mask(ds: &Dataset, limit: f64) -> Vec<bool> {
    let m = ds.n_attributes();
    let mut keep = vec![true; m];
    for j in 0..m {
        for i in 0..j {
            if !keep[i] {
                continue;
            }
            if let Some(r) = pairwise_pearson(ds, i, j) {
                if r.abs() > limit {
                    keep[j] = false;
                    break;
                }
            }
        }
    }
    keep
}

/// Pearson correlation over patients where both cells are present. `None`
/// with fewer than three such patients or a constant column.
fn pairwise_pearson(ds: &Dataset, a: usize, b: usize) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = ds
        .rows()
        .iter()
        .filter_map(|row| Some((row[a].value()?, row[b].value()?)))
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{AttributeKind, AttributeSpec, Cell, OutcomeRecord, TnmStage};

    fn rec(months: u32, status: VitalStatus) -> OutcomeRecord {
        OutcomeRecord {
            survival_months: months,
            vital_status: status,
            tnm_stage: TnmStage::new(2).unwrap(),
        }
    }

    /// Five attributes, one of them sparse and one TNM-derived; patients
    /// violating each patient-level rule once.
    fn fixture() -> Dataset {
        let attrs = vec![
            AttributeSpec::feature("a", AttributeKind::Continuous),
            AttributeSpec::feature("b", AttributeKind::Binary),
            AttributeSpec::feature("c", AttributeKind::Continuous),
            AttributeSpec::feature("sparse", AttributeKind::Continuous),
            AttributeSpec::new(
                "dukes",
                AttributeKind::Ordinal { levels: 4 },
                &[Role::TnmDerived],
            ),
        ];
        let p = Cell::Present(1.0);
        let m = Cell::Missing;
        let rows = vec![
            vec![p, p, p, m, p],
            vec![p, p, p, m, p],
            // 2 of 5 present: 40% coverage
            vec![p, m, m, m, p],
            vec![p, p, p, p, p],
            vec![p, p, p, m, p],
            vec![p, p, p, p, p],
        ];
        let outcomes = vec![
            rec(72, VitalStatus::Alive),
            rec(30, VitalStatus::DeadOfDisease),
            rec(80, VitalStatus::Alive),
            rec(48, VitalStatus::Alive),
            rec(30, VitalStatus::DeadOther),
            rec(65, VitalStatus::DeadOther),
        ];
        let ids = (1..=6).map(|i| format!("p{i}")).collect();
        Dataset::new(attrs, ids, rows, outcomes).unwrap()
    }

    #[test]
    fn each_rule_removes_its_violator() {
        let (out, audit) = apply_protocol(&fixture(), &ExclusionConfig::default()).unwrap();
        let counts: Vec<(&str, usize, usize)> = audit
            .steps
            .iter()
            .map(|s| (s.step.as_str(), s.patients_removed, s.attributes_removed))
            .collect();
        assert_eq!(
            counts,
            vec![
                ("input", 0, 0),
                ("patient_coverage", 1, 0),
                ("attribute_coverage", 0, 1),
                ("alive_short_followup", 1, 0),
                ("dead_other_early", 1, 0),
                ("drop_roles", 0, 1),
                ("drop_listed", 0, 0),
            ]
        );
        assert_eq!(out.patient_ids(), ["p1", "p2", "p6"]);
        let names: Vec<_> = out.attributes().iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn coverage_threshold_is_strict_fewer_than() {
        // patient 1 has exactly 50% coverage and is kept
        let attrs = vec![
            AttributeSpec::feature("a", AttributeKind::Continuous),
            AttributeSpec::feature("b", AttributeKind::Continuous),
        ];
        let rows = vec![
            vec![Cell::Present(1.0), Cell::Missing],
            vec![Cell::Present(1.0), Cell::Present(2.0)],
        ];
        let ds = Dataset::new(
            attrs,
            vec!["x".into(), "y".into()],
            rows,
            vec![rec(70, VitalStatus::Alive); 2],
        )
        .unwrap();
        let (out, _) = apply_protocol(&ds, &ExclusionConfig::default()).unwrap();
        assert_eq!(out.n_patients(), 2);
        assert_eq!(out.n_attributes(), 2);
    }

    #[test]
    fn audit_telescopes() {
        let (_, audit) = apply_protocol(&fixture(), &ExclusionConfig::default()).unwrap();
        for w in audit.steps.windows(2) {
            assert_eq!(
                w[1].patients_left,
                w[0].patients_left - w[1].patients_removed
            );
            assert_eq!(
                w[1].attributes_left,
                w[0].attributes_left - w[1].attributes_removed
            );
        }
    }

    #[test]
    fn degenerate_result_carries_audit() {
        let cfg = ExclusionConfig {
            min_patient_coverage: 1.0,
            survival_threshold_months: 1000,
            ..Default::default()
        };
        match apply_protocol(&fixture(), &cfg) {
            Err(PreprocessError::Degenerate { step, axis, audit }) => {
                assert_eq!(axis, "patients");
                assert_eq!(step, "dead_other_early");
                assert_eq!(audit.steps.last().unwrap().patients_left, 0);
            }
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn listed_and_correlated_drops() {
        let cfg = ExclusionConfig {
            drop_attributes: vec!["b".into()],
            correlation_threshold: Some(0.95),
            ..Default::default()
        };
        let attrs = vec![
            AttributeSpec::feature("x", AttributeKind::Continuous),
            AttributeSpec::feature("b", AttributeKind::Continuous),
            AttributeSpec::feature("x2", AttributeKind::Continuous),
            AttributeSpec::feature("z", AttributeKind::Continuous),
        ];
        let rows: Vec<Vec<Cell>> = (0..6)
            .map(|i| {
                let x = i as f64;
                vec![
                    Cell::Present(x),
                    Cell::Present(1.0),
                    Cell::Present(2.0 * x + 1.0),
                    Cell::Present(((i * 7) % 5) as f64),
                ]
            })
            .collect();
        let ds = Dataset::new(
            attrs,
            (0..6).map(|i| i.to_string()).collect(),
            rows,
            vec![rec(70, VitalStatus::Alive); 6],
        )
        .unwrap();
        let (out, audit) = apply_protocol(&ds, &cfg).unwrap();
        let names: Vec<_> = out.attributes().iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["x", "z"]);
        assert_eq!(audit.step("drop_correlated").unwrap().attributes_removed, 1);
    }

    #[test]
    fn config_validation() {
        let bad = ExclusionConfig {
            min_patient_coverage: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExclusionConfig {
            survival_threshold_months: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn audit_csv_layout() {
        let (_, audit) = apply_protocol(&fixture(), &ExclusionConfig::default()).unwrap();
        let csv = audit.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("step,patients_removed,attributes_removed,patients_left,attributes_left")
        );
        assert_eq!(lines.next(), Some("input,0,0,6,5"));
        assert_eq!(lines.next(), Some("patient_coverage,1,0,5,5"));
    }
}
