//! In-memory data model for clinical-style tables: an attribute schema, a
//! patients × attributes matrix of optionally-missing cells, and one outcome
//! record per patient.
//!
//! CSV layout: an optional leading `patient_id` column, the schema's
//! non-outcome attributes in schema order, then the three outcome columns
//! `survival_months`, `vital_status`, `tnm_stage`. Missing cells are written
//! as one of [`MISSING_MARKERS`]; any other unparseable text is an error.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell texts that denote a missing value. Matching is case-sensitive.
pub const MISSING_MARKERS: [&str; 3] = ["", "?", "NA"];

/// Marker used when writing missing cells.
pub const MISSING_OUT: &str = "NA";

pub const ID_COLUMN: &str = "patient_id";
pub const MONTHS_COLUMN: &str = "survival_months";
pub const STATUS_COLUMN: &str = "vital_status";
pub const STAGE_COLUMN: &str = "tnm_stage";
pub const OUTCOME_COLUMNS: [&str; 3] = [MONTHS_COLUMN, STATUS_COLUMN, STAGE_COLUMN];

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}, column `{column}`: cannot accept {value:?} ({reason})")]
    Cell {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("inconsistent dataset: {0}")]
    Shape(String),
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("{axis} mask has length {found}, expected {expected}")]
    MaskLength {
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Value domain of an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttributeKind {
    /// Thresholded marker: 0 or 1.
    Binary,
    /// Ordered integer levels `0..levels`.
    Ordinal { levels: u32 },
    /// Any finite real.
    Continuous,
    /// Unordered integer levels `0..levels`.
    Categorical { levels: u32 },
}

impl AttributeKind {
    /// Number of admissible levels for discrete kinds.
    pub fn levels(&self) -> Option<u32> {
        match *self {
            AttributeKind::Binary => Some(2),
            AttributeKind::Ordinal { levels } | AttributeKind::Categorical { levels } => {
                Some(levels)
            }
            AttributeKind::Continuous => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.levels().is_some()
    }

    /// Whether `v` satisfies this kind's value constraint.
    pub fn admits(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self.levels() {
            None => true,
            Some(levels) => v.fract() == 0.0 && v >= 0.0 && v < f64::from(levels),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            AttributeKind::Ordinal { levels } | AttributeKind::Categorical { levels }
                if levels < 2 =>
            {
                Err(format!("level count must be at least 2, got {levels}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Feature,
    TnmDerived,
    PostOperative,
    Compound,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub roles: BTreeSet<Role>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, kind: AttributeKind, roles: &[Role]) -> Self {
        AttributeSpec {
            name: name.into(),
            kind,
            roles: roles.iter().copied().collect(),
        }
    }

    /// A plain predictive attribute.
    pub fn feature(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self::new(name, kind, &[Role::Feature])
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn is_outcome(&self) -> bool {
        self.has_role(Role::Outcome)
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("attribute names must be non-empty".into());
        }
        if self.roles.is_empty() {
            return Err(format!("attribute `{}` has no roles", self.name));
        }
        if self.is_outcome() && self.roles.len() > 1 {
            return Err(format!(
                "attribute `{}`: the outcome role cannot be combined with others",
                self.name
            ));
        }
        if self.is_outcome() && !OUTCOME_COLUMNS.contains(&self.name.as_str()) {
            return Err(format!(
                "attribute `{}` is marked outcome but is not one of {:?}",
                self.name, OUTCOME_COLUMNS
            ));
        }
        if !self.is_outcome()
            && (OUTCOME_COLUMNS.contains(&self.name.as_str()) || self.name == ID_COLUMN)
        {
            return Err(format!("attribute name `{}` is reserved", self.name));
        }
        self.kind
            .validate()
            .map_err(|e| format!("attribute `{}`: {e}", self.name))
    }
}

/// The schema sidecar: attribute specs in column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<AttributeSpec>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Self {
        Schema { attributes }
    }

    pub fn from_json(text: &str) -> Result<Self, TabularError> {
        let schema: Schema = serde_json::from_str(text)?;
        validate_specs(&schema.attributes)?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }

    /// Specs of the matrix columns (everything except outcome-role entries).
    pub fn feature_specs(&self) -> Vec<AttributeSpec> {
        self.attributes
            .iter()
            .filter(|a| !a.is_outcome())
            .cloned()
            .collect()
    }
}

fn validate_specs(specs: &[AttributeSpec]) -> Result<(), TabularError> {
    let mut seen = BTreeSet::new();
    for spec in specs {
        spec.validate().map_err(TabularError::Schema)?;
        if !seen.insert(spec.name.as_str()) {
            return Err(TabularError::Schema(format!(
                "duplicate attribute name `{}`",
                spec.name
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Present(f64),
    Missing,
}

impl Cell {
    pub fn value(self) -> Option<f64> {
        match self {
            Cell::Present(v) => Some(v),
            Cell::Missing => None,
        }
    }

    pub fn is_missing(self) -> bool {
        matches!(self, Cell::Missing)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Present)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalStatus {
    Alive,
    DeadOfDisease,
    DeadOther,
}

impl VitalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VitalStatus::Alive => "alive",
            VitalStatus::DeadOfDisease => "dead_of_disease",
            VitalStatus::DeadOther => "dead_other",
        }
    }
}

impl fmt::Display for VitalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VitalStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alive" => Ok(VitalStatus::Alive),
            "dead_of_disease" => Ok(VitalStatus::DeadOfDisease),
            "dead_other" => Ok(VitalStatus::DeadOther),
            _ => Err("expected alive, dead_of_disease or dead_other".into()),
        }
    }
}

/// TNM stage, 1 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TnmStage(u8);

impl TnmStage {
    pub fn new(stage: u8) -> Option<Self> {
        (1..=4).contains(&stage).then_some(TnmStage(stage))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for TnmStage {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        TnmStage::new(v).ok_or_else(|| format!("TNM stage must be 1..=4, got {v}"))
    }
}

impl From<TnmStage> for u8 {
    fn from(s: TnmStage) -> u8 {
        s.0
    }
}

impl fmt::Display for TnmStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub survival_months: u32,
    pub vital_status: VitalStatus,
    pub tnm_stage: TnmStage,
}

/// Patients × attributes table with outcomes. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    attributes: Vec<AttributeSpec>,
    patient_ids: Vec<String>,
    cells: Vec<Vec<Cell>>,
    outcomes: Vec<OutcomeRecord>,
}

impl Dataset {
    /// Builds a dataset, checking shapes and every present cell against its
    /// attribute kind.
    pub fn new(
        attributes: Vec<AttributeSpec>,
        patient_ids: Vec<String>,
        cells: Vec<Vec<Cell>>,
        outcomes: Vec<OutcomeRecord>,
    ) -> Result<Self, TabularError> {
        validate_specs(&attributes)?;
        if let Some(a) = attributes.iter().find(|a| a.is_outcome()) {
            return Err(TabularError::Schema(format!(
                "outcome attribute `{}` cannot be a matrix column",
                a.name
            )));
        }
        if patient_ids.len() != cells.len() || patient_ids.len() != outcomes.len() {
            return Err(TabularError::Shape(format!(
                "{} ids, {} rows, {} outcomes",
                patient_ids.len(),
                cells.len(),
                outcomes.len()
            )));
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(TabularError::RowLength {
                    row: r + 1,
                    expected: attributes.len(),
                    found: row.len(),
                });
            }
            for (cell, spec) in row.iter().zip(&attributes) {
                if let Cell::Present(v) = *cell {
                    if !spec.kind.admits(v) {
                        return Err(TabularError::Cell {
                            row: r + 1,
                            column: spec.name.clone(),
                            value: v.to_string(),
                            reason: format!("violates {:?}", spec.kind),
                        });
                    }
                }
            }
        }
        Ok(Dataset {
            attributes,
            patient_ids,
            cells,
            outcomes,
        })
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn outcomes(&self) -> &[OutcomeRecord] {
        &self.outcomes
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.cells
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn cell(&self, patient: usize, attribute: usize) -> Cell {
        self.cells[patient][attribute]
    }

    pub fn column(&self, attribute: usize) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().map(move |row| row[attribute])
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn missing_count(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|c| c.is_missing())
            .count()
    }

    pub fn present_count(&self) -> usize {
        self.n_patients() * self.n_attributes() - self.missing_count()
    }

    /// Fraction of all matrix cells that are missing (0 for an empty matrix).
    pub fn missing_fraction(&self) -> f64 {
        let total = self.n_patients() * self.n_attributes();
        if total == 0 {
            0.0
        } else {
            self.missing_count() as f64 / total as f64
        }
    }

    /// The schema describing this dataset, including the outcome columns.
    pub fn schema(&self) -> Schema {
        let mut attributes = self.attributes.clone();
        attributes.push(AttributeSpec::new(
            MONTHS_COLUMN,
            AttributeKind::Continuous,
            &[Role::Outcome],
        ));
        attributes.push(AttributeSpec::new(
            STATUS_COLUMN,
            AttributeKind::Categorical { levels: 3 },
            &[Role::Outcome],
        ));
        attributes.push(AttributeSpec::new(
            STAGE_COLUMN,
            AttributeKind::Ordinal { levels: 5 },
            &[Role::Outcome],
        ));
        Schema { attributes }
    }

    /// Writes the dataset as CSV with a `patient_id` column. Values use the
    /// shortest representation that parses back to the identical `f64`.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec![ID_COLUMN.to_string()];
        header.extend(self.attributes.iter().map(|a| a.name.clone()));
        header.extend(OUTCOME_COLUMNS.iter().map(|s| s.to_string()));
        wtr.write_record(&header).expect("in-memory write");
        for ((id, row), outcome) in self.patient_ids.iter().zip(&self.cells).zip(&self.outcomes) {
            let mut record = Vec::with_capacity(header.len());
            record.push(id.clone());
            record.extend(row.iter().map(|c| match c {
                Cell::Present(v) => v.to_string(),
                Cell::Missing => MISSING_OUT.to_string(),
            }));
            record.push(outcome.survival_months.to_string());
            record.push(outcome.vital_status.to_string());
            record.push(outcome.tnm_stage.to_string());
            wtr.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

/// Parses CSV text against `schema`. Outcome-role entries in the schema are
/// allowed but only name the fixed outcome columns.
pub fn parse_dataset(csv_text: &str, schema: &[AttributeSpec]) -> Result<Dataset, TabularError> {
    validate_specs(schema)?;
    let specs: Vec<AttributeSpec> = schema.iter().filter(|a| !a.is_outcome()).cloned().collect();

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let has_id = header.first().map(String::as_str) == Some(ID_COLUMN);
    let mut expected: Vec<String> = Vec::with_capacity(specs.len() + 4);
    if has_id {
        expected.push(ID_COLUMN.to_string());
    }
    expected.extend(specs.iter().map(|a| a.name.clone()));
    expected.extend(OUTCOME_COLUMNS.iter().map(|s| s.to_string()));
    if header != expected {
        return Err(TabularError::Header {
            expected,
            found: header,
        });
    }

    let offset = usize::from(has_id);
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    let mut outcomes = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        if record.len() != expected.len() {
            return Err(TabularError::RowLength {
                row: row_no,
                expected: expected.len(),
                found: record.len(),
            });
        }
        ids.push(if has_id {
            record[0].to_string()
        } else {
            format!("row{row_no}")
        });
        let row = specs
            .iter()
            .enumerate()
            .map(|(j, spec)| parse_cell(&record[offset + j], spec, row_no))
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(row);
        let base = offset + specs.len();
        outcomes.push(parse_outcome(&record, base, row_no)?);
    }
    Dataset::new(specs, ids, cells, outcomes)
}

fn parse_cell(text: &str, spec: &AttributeSpec, row: usize) -> Result<Cell, TabularError> {
    if MISSING_MARKERS.contains(&text) {
        return Ok(Cell::Missing);
    }
    let err = |reason: String| TabularError::Cell {
        row,
        column: spec.name.clone(),
        value: text.to_string(),
        reason,
    };
    let v: f64 = text.parse().map_err(|_| err("not a number".into()))?;
    if !v.is_finite() {
        return Err(err("non-finite value".into()));
    }
    if !spec.kind.admits(v) {
        return Err(err(format!("outside {:?}", spec.kind)));
    }
    Ok(Cell::Present(v))
}

fn parse_outcome(
    record: &csv::StringRecord,
    base: usize,
    row: usize,
) -> Result<OutcomeRecord, TabularError> {
    let err = |col: &str, value: &str, reason: &str| TabularError::Cell {
        row,
        column: col.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    };
    let months_text = &record[base];
    let survival_months: u32 = months_text.parse().map_err(|_| {
        err(
            MONTHS_COLUMN,
            months_text,
            "expected a non-negative integer",
        )
    })?;
    let status_text = &record[base + 1];
    let vital_status: VitalStatus = status_text
        .parse()
        .map_err(|e: String| err(STATUS_COLUMN, status_text, &e))?;
    let stage_text = &record[base + 2];
    let tnm_stage = stage_text
        .parse::<u8>()
        .ok()
        .and_then(TnmStage::new)
        .ok_or_else(|| err(STAGE_COLUMN, stage_text, "expected a stage in 1..=4"))?;
    Ok(OutcomeRecord {
        survival_months,
        vital_status,
        tnm_stage,
    })
}

/// Fraction of attributes present for each patient. A dataset with no
/// attributes reports 0 for every patient.
pub fn coverage_by_patient(ds: &Dataset) -> Vec<f64> {
    let m = ds.n_attributes();
    ds.rows()
        .iter()
        .map(|row| {
            if m == 0 {
                0.0
            } else {
                row.iter().filter(|c| !c.is_missing()).count() as f64 / m as f64
            }
        })
        .collect()
}

/// Fraction of patients with a present value, per attribute.
pub fn coverage_by_attribute(ds: &Dataset) -> Result<Vec<f64>, TabularError> {
    let n = ds.n_patients();
    if n == 0 {
        return Err(TabularError::Degenerate("no patients".into()));
    }
    Ok((0..ds.n_attributes())
        .map(|j| ds.column(j).filter(|c| !c.is_missing()).count() as f64 / n as f64)
        .collect())
}

/// Order-preserving subset of patients and attributes.
pub fn select(
    ds: &Dataset,
    patient_mask: &[bool],
    attribute_mask: &[bool],
) -> Result<Dataset, TabularError> {
    if patient_mask.len() != ds.n_patients() {
        return Err(TabularError::MaskLength {
            axis: "patient",
            expected: ds.n_patients(),
            found: patient_mask.len(),
        });
    }
    if attribute_mask.len() != ds.n_attributes() {
        return Err(TabularError::MaskLength {
            axis: "attribute",
            expected: ds.n_attributes(),
            found: attribute_mask.len(),
        });
    }
    let keep = |mask: &[bool], i: usize| mask[i];
    let attributes = ds
        .attributes
        .iter()
        .enumerate()
        .filter(|&(j, _)| keep(attribute_mask, j))
        .map(|(_, a)| a.clone())
        .collect();
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    let mut outcomes = Vec::new();
    for i in (0..ds.n_patients()).filter(|&i| keep(patient_mask, i)) {
        ids.push(ds.patient_ids[i].clone());
        cells.push(
            ds.cells[i]
                .iter()
                .enumerate()
                .filter(|&(j, _)| keep(attribute_mask, j))
                .map(|(_, c)| *c)
                .collect(),
        );
        outcomes.push(ds.outcomes[i]);
    }
    Ok(Dataset {
        attributes,
        patient_ids: ids,
        cells,
        outcomes,
    })
}

/// The named attributes, in the given order, for every patient.
pub fn project(ds: &Dataset, names: &[String]) -> Result<Dataset, TabularError> {
    let idx = names
        .iter()
        .map(|n| {
            ds.attribute_index(n)
                .ok_or_else(|| TabularError::Schema(format!("dataset has no attribute `{n}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(
        idx.iter().map(|&j| ds.attributes[j].clone()).collect(),
        ds.patient_ids.clone(),
        ds.cells
            .iter()
            .map(|row| idx.iter().map(|&j| row[j]).collect())
            .collect(),
        ds.outcomes.clone(),
    )
}

/// Rebuilds a dataset with the same patients and outcomes but new attribute
/// columns. Each row of `rows` is aligned to `attributes`.
pub(crate) fn replace_columns(
    ds: &Dataset,
    attributes: Vec<AttributeSpec>,
    rows: Vec<Vec<Cell>>,
) -> Result<Dataset, TabularError> {
    Dataset::new(
        attributes,
        ds.patient_ids.clone(),
        rows,
        ds.outcomes.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(months: u32, status: VitalStatus, stage: u8) -> OutcomeRecord {
        OutcomeRecord {
            survival_months: months,
            vital_status: status,
            tnm_stage: TnmStage::new(stage).unwrap(),
        }
    }

    fn small_schema() -> Vec<AttributeSpec> {
        vec![
            AttributeSpec::feature("cd16", AttributeKind::Binary),
            AttributeSpec::feature("age", AttributeKind::Continuous),
            AttributeSpec::feature("flipl", AttributeKind::Ordinal { levels: 4 }),
        ]
    }

    const SMALL_CSV: &str = "\
patient_id,cd16,age,flipl,survival_months,vital_status,tnm_stage
a,1,61.5,2,72,alive,2
b,0,?,0,40,dead_of_disease,3
c,1,70,3,12,dead_other,2
";

    #[test]
    fn parses_one_missing_cell() {
        let ds = parse_dataset(SMALL_CSV, &small_schema()).unwrap();
        assert_eq!(ds.n_patients(), 3);
        assert_eq!(ds.missing_count(), 1);
        assert_eq!(ds.cell(1, 1), Cell::Missing);
        assert_eq!(ds.cell(0, 1), Cell::Present(61.5));
        assert_eq!(ds.outcomes()[1], outcome(40, VitalStatus::DeadOfDisease, 3));
        assert_eq!(ds.patient_ids(), ["a", "b", "c"]);
    }

    #[test]
    fn all_missing_markers_accepted() {
        let csv = "cd16,age,flipl,survival_months,vital_status,tnm_stage\n,NA,?,10,alive,1\n";
        let ds = parse_dataset(csv, &small_schema()).unwrap();
        assert_eq!(ds.missing_count(), 3);
        assert_eq!(ds.patient_ids(), ["row1"]);
    }

    #[test]
    fn missing_markers_are_case_sensitive() {
        let csv = "cd16,age,flipl,survival_months,vital_status,tnm_stage\n1,na,1,10,alive,1\n";
        let err = parse_dataset(csv, &small_schema()).unwrap_err();
        assert!(matches!(err, TabularError::Cell { row: 1, ref column, .. } if column == "age"));
    }

    #[test]
    fn binary_violation_names_row_and_column() {
        let csv = SMALL_CSV.replace("b,0,", "b,2,");
        match parse_dataset(&csv, &small_schema()).unwrap_err() {
            TabularError::Cell {
                row, column, value, ..
            } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "cd16", "2"));
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn ordinal_fraction_rejected_not_coerced() {
        let csv = SMALL_CSV.replace("a,1,61.5,2,", "a,1,61.5,1.5,");
        assert!(matches!(
            parse_dataset(&csv, &small_schema()),
            Err(TabularError::Cell { row: 1, .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let csv = SMALL_CSV.replace("61.5", "inf");
        assert!(parse_dataset(&csv, &small_schema()).is_err());
    }

    #[test]
    fn header_mismatch() {
        let csv = SMALL_CSV.replace("flipl,survival", "flip,survival");
        assert!(matches!(
            parse_dataset(&csv, &small_schema()),
            Err(TabularError::Header { .. })
        ));
    }

    #[test]
    fn missing_outcome_columns_rejected() {
        let csv = "cd16,age,flipl\n1,2,1\n";
        assert!(matches!(
            parse_dataset(csv, &small_schema()),
            Err(TabularError::Header { .. })
        ));
    }

    #[test]
    fn invalid_outcomes() {
        for (from, to) in [
            (",72,alive,2", ",72,living,2"),
            (",72,alive,2", ",72,alive,5"),
            (",72,alive,2", ",-1,alive,2"),
        ] {
            let csv = SMALL_CSV.replace(from, to);
            assert!(
                matches!(
                    parse_dataset(&csv, &small_schema()),
                    Err(TabularError::Cell { row: 1, .. })
                ),
                "{to}"
            );
        }
    }

    #[test]
    fn schema_with_outcome_entries() {
        let mut schema = small_schema();
        schema.push(AttributeSpec::new(
            STAGE_COLUMN,
            AttributeKind::Ordinal { levels: 5 },
            &[Role::Outcome],
        ));
        let ds = parse_dataset(SMALL_CSV, &schema).unwrap();
        assert_eq!(ds.n_attributes(), 3);
    }

    #[test]
    fn schema_validation() {
        let dup = vec![
            AttributeSpec::feature("x", AttributeKind::Binary),
            AttributeSpec::feature("x", AttributeKind::Continuous),
        ];
        assert!(matches!(validate_specs(&dup), Err(TabularError::Schema(_))));
        let mixed = vec![AttributeSpec::new(
            "tnm_stage",
            AttributeKind::Binary,
            &[Role::Outcome, Role::Feature],
        )];
        assert!(validate_specs(&mixed).is_err());
        let no_roles = vec![AttributeSpec::new("x", AttributeKind::Binary, &[])];
        assert!(validate_specs(&no_roles).is_err());
        let one_level = vec![AttributeSpec::feature(
            "x",
            AttributeKind::Ordinal { levels: 1 },
        )];
        assert!(validate_specs(&one_level).is_err());
    }

    #[test]
    fn schema_json_round_trip() {
        let schema = Schema::new(small_schema());
        assert_eq!(Schema::from_json(&schema.to_json()).unwrap(), schema);
    }

    #[test]
    fn coverage_examples() {
        let specs: Vec<_> = (0..4)
            .map(|j| AttributeSpec::feature(format!("a{j}"), AttributeKind::Continuous))
            .collect();
        let p = Cell::Present(1.0);
        let m = Cell::Missing;
        let ds = Dataset::new(
            specs,
            vec!["x".into(), "y".into(), "z".into()],
            vec![vec![p, m, p, m], vec![p, p, p, p], vec![m, m, m, m]],
            vec![outcome(1, VitalStatus::Alive, 2); 3],
        )
        .unwrap();
        assert_eq!(coverage_by_patient(&ds), vec![0.5, 1.0, 0.0]);
        let by_attr = coverage_by_attribute(&ds).unwrap();
        assert_eq!(by_attr, vec![2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn attribute_half_populated() {
        let specs = vec![AttributeSpec::feature("a", AttributeKind::Continuous)];
        let rows = (0..6)
            .map(|i| {
                vec![if i % 2 == 0 {
                    Cell::Present(i as f64)
                } else {
                    Cell::Missing
                }]
            })
            .collect();
        let ds = Dataset::new(
            specs,
            (0..6).map(|i| i.to_string()).collect(),
            rows,
            vec![outcome(1, VitalStatus::Alive, 2); 6],
        )
        .unwrap();
        assert_eq!(coverage_by_attribute(&ds).unwrap(), vec![0.5]);
    }

    #[test]
    fn attribute_coverage_of_empty_dataset_is_an_error() {
        let ds = Dataset::new(small_schema(), vec![], vec![], vec![]).unwrap();
        assert!(matches!(
            coverage_by_attribute(&ds),
            Err(TabularError::Degenerate(_))
        ));
        assert!(coverage_by_patient(&ds).is_empty());
    }

    #[test]
    fn select_examples() {
        let ds = parse_dataset(SMALL_CSV, &small_schema()).unwrap();
        assert_eq!(select(&ds, &[true; 3], &[true; 3]).unwrap(), ds);

        let none = select(&ds, &[false; 3], &[true; 3]).unwrap();
        assert_eq!(none.n_patients(), 0);
        assert_eq!(none.attributes(), ds.attributes());

        let sub = select(&ds, &[true, false, true], &[true; 3]).unwrap();
        assert_eq!(sub.patient_ids(), ["a", "c"]);
        assert_eq!(sub.outcomes()[1], ds.outcomes()[2]);

        assert!(matches!(
            select(&ds, &[true; 2], &[true; 3]),
            Err(TabularError::MaskLength {
                axis: "patient",
                ..
            })
        ));
        assert!(matches!(
            select(&ds, &[true; 3], &[true; 4]),
            Err(TabularError::MaskLength {
                axis: "attribute",
                ..
            })
        ));
    }

    fn arb_kind() -> impl Strategy<Value = AttributeKind> {
        prop_oneof![
            Just(AttributeKind::Binary),
            Just(AttributeKind::Continuous),
            (2u32..6).prop_map(|levels| AttributeKind::Ordinal { levels }),
            (2u32..6).prop_map(|levels| AttributeKind::Categorical { levels }),
        ]
    }

    fn arb_cell(kind: AttributeKind) -> BoxedStrategy<Cell> {
        let present: BoxedStrategy<f64> = match kind.levels() {
            Some(l) => (0..l).prop_map(f64::from).boxed(),
            None => prop_oneof![
                any::<f64>().prop_filter("finite", |v| v.is_finite()),
                -1e3f64..1e3
            ]
            .boxed(),
        };
        prop_oneof![1 => Just(Cell::Missing), 4 => present.prop_map(Cell::Present)].boxed()
    }

    fn arb_outcome() -> impl Strategy<Value = OutcomeRecord> {
        (
            0u32..200,
            prop_oneof![
                Just(VitalStatus::Alive),
                Just(VitalStatus::DeadOfDisease),
                Just(VitalStatus::DeadOther)
            ],
            1u8..=4,
        )
            .prop_map(|(m, s, t)| outcome(m, s, t))
    }

    prop_compose! {
        fn arb_dataset()(kinds in prop::collection::vec(arb_kind(), 1..6), n in 0usize..12)
            (rows in prop::collection::vec(kinds.iter().map(|k| arb_cell(*k)).collect::<Vec<_>>(), n),
             outcomes in prop::collection::vec(arb_outcome(), n),
             kinds in Just(kinds), n in Just(n)) -> Dataset {
            let specs = kinds.iter().enumerate().map(|(j, k)| AttributeSpec::feature(format!("attr{j}"), *k)).collect();
            let ids = (0..n).map(|i| format!("id,\"{i}\"")).collect();
            Dataset::new(specs, ids, rows, outcomes).unwrap()
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(ds in arb_dataset()) {
            let back = parse_dataset(&ds.to_csv(), ds.attributes()).unwrap();
            prop_assert_eq!(back.n_patients(), ds.n_patients());
            for (a, b) in back.rows().iter().flatten().zip(ds.rows().iter().flatten()) {
                match (a, b) {
                    (Cell::Present(x), Cell::Present(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                    (Cell::Missing, Cell::Missing) => {}
                    _ => prop_assert!(false, "cell mismatch {:?} vs {:?}", a, b),
                }
            }
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn coverage_totals_agree(ds in arb_dataset()) {
            prop_assume!(ds.n_patients() > 0);
            let present = ds.present_count() as f64;
            let by_p: f64 = coverage_by_patient(&ds).iter().sum::<f64>() * ds.n_attributes() as f64;
            let by_a: f64 = coverage_by_attribute(&ds).unwrap().iter().sum::<f64>() * ds.n_patients() as f64;
            prop_assert!((by_p - present).abs() < 1e-9);
            prop_assert!((by_a - present).abs() < 1e-9);
        }

        #[test]
        fn select_composes(ds in arb_dataset(), seed in any::<u64>()) {
            let pmask: Vec<bool> = (0..ds.n_patients()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let amask: Vec<bool> = (0..ds.n_attributes()).map(|j| (seed >> ((j + 7) % 64)) & 1 == 1).collect();
            let all_a = vec![true; ds.n_attributes()];
            let once = select(&ds, &pmask, &amask).unwrap();
            let staged = select(&select(&ds, &pmask, &all_a).unwrap(), &vec![true; once.n_patients()], &amask).unwrap();
            prop_assert_eq!(&staged, &once);
            let p_sel = vec![true; once.n_patients()];
            let a_sel = vec![true; once.n_attributes()];
            prop_assert_eq!(select(&once, &p_sel, &a_sel).unwrap(), once);
        }
    }
}
