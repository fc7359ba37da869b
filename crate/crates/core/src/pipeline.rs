//! End-to-end run: config loading, cohort preparation, cross-validated
//! evaluation, the final model, survival curves and the artifact set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{
    attribute_sweep, build_report, cross_validate, default_sweep_k, derive_seed, prognosis_group,
    AgreementReport, CvResult, EnsembleError, EnsembleModel, EvalConfig, FeaturePipeline,
    ModelSource, PredictionClass, PrognosisGroup, SourcePredictions, Subset, SweepPoint,
    SweepVariant,
};
use crate::learners::{LearnError, MlpConfig, SvmConfig};
use crate::preprocess::{
    apply_protocol, labels_for, AuditLog, ExclusionConfig, PreprocessError, SurvivalLabel,
};
use crate::ranking::{rfe_rank, NamedRanking, RankError};
use crate::survival::{curves_to_csv, km_by_group, GroupedCurves, SurvivalError, TimedOutcome};
use crate::tabular::{parse_dataset, select, Dataset, Schema, TabularError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
}

impl PipelineError {
    /// 1 for unreadable or unwritable paths, 3 for internal invariant
    /// breaches, 2 for everything wrong with the inputs themselves.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Io { .. } => 1,
            PipelineError::Invariant(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn d_folds() -> usize {
    5
}
fn d_k_top() -> usize {
    8
}
fn d_k_bottom() -> usize {
    6
}
fn d_threshold() -> u32 {
    60
}
fn d_true() -> bool {
    true
}
fn d_svm() -> SvmConfig {
    SvmConfig::new(0)
}
fn d_mlp() -> MlpConfig {
    MlpConfig::new(0)
}

/// A run as read from a JSON config. Relative paths are resolved against
/// the config file's directory. `survival_threshold_months` overrides the
/// value inside `exclusion`; learner seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub out: PathBuf,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default = "d_k_top")]
    pub k_top: usize,
    #[serde(default = "d_k_bottom")]
    pub k_bottom: usize,
    #[serde(default = "d_threshold")]
    pub survival_threshold_months: u32,
    #[serde(default)]
    pub exclusion: ExclusionConfig,
    #[serde(default = "d_true")]
    pub linearize: bool,
    /// Attribute counts for the sweep; a default list when absent.
    #[serde(default)]
    pub sweep_k: Option<Vec<usize>>,
    #[serde(default = "d_svm")]
    pub svm: SvmConfig,
    #[serde(default = "d_mlp")]
    pub mlp: MlpConfig,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub folds: Option<usize>,
    pub k_top: Option<usize>,
    pub k_bottom: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [&mut cfg.dataset, &mut cfg.schema, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.exclusion.survival_threshold_months = cfg.survival_threshold_months;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, PipelineError> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_json(&text, base)?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(f) = o.folds {
            self.folds = f;
        }
        if let Some(k) = o.k_top {
            self.k_top = k;
        }
        if let Some(k) = o.k_bottom {
            self.k_bottom = k;
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.seed.is_none() {
            return Err(PipelineError::Config(
                "a seed is required (config `seed` or --seed)".into(),
            ));
        }
        let paths = [&self.dataset, &self.schema, &self.out];
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                if paths[i] == paths[j] {
                    return Err(PipelineError::Config(format!(
                        "paths must be distinct; `{}` is used twice",
                        paths[i].display()
                    )));
                }
            }
        }
        if self.folds == 0 || self.k_top == 0 || self.k_bottom == 0 {
            return Err(PipelineError::Config(
                "folds, k_top and k_bottom must be positive".into(),
            ));
        }
        if self.sweep_k.as_ref().is_some_and(|k| k.is_empty()) {
            return Err(PipelineError::Config("sweep_k must not be empty".into()));
        }
        self.exclusion.validate()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn eval_config(&self) -> EvalConfig {
        let seed = self.seed();
        EvalConfig {
            seed,
            folds: self.folds,
            k_top: self.k_top,
            k_bottom: self.k_bottom,
            linearize: self.linearize,
            svm: SvmConfig {
                seed,
                ..self.svm.clone()
            },
            mlp: MlpConfig {
                seed,
                ..self.mlp.clone()
            },
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset, PipelineError> {
        let schema = Schema::from_json(&read_text(&self.schema)?)?;
        Ok(parse_dataset(
            &read_text(&self.dataset)?,
            &schema.attributes,
        )?)
    }
}

/// The modelled cohort: protocol applied, restricted to stages 2 and 3, and
/// only patients with a five-year label.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub dataset: Dataset,
    pub labels: Vec<SurvivalLabel>,
    pub audit: AuditLog,
}

pub fn prepare_cohort(ds: &Dataset, cfg: &RunConfig) -> Result<Cohort, PipelineError> {
    let (ds, mut audit) = apply_protocol(ds, &cfg.exclusion)?;
    let all = vec![true; ds.n_attributes()];
    let staged: Vec<bool> = ds
        .outcomes()
        .iter()
        .map(|o| matches!(o.tnm_stage.get(), 2 | 3))
        .collect();
    let ds = select(&ds, &staged, &all)?;
    audit.record("stage_2_or_3", &ds);
    if ds.n_patients() == 0 {
        return Err(PipelineError::Data(
            "no stage 2 or 3 patients remain; the TNM rule cannot be applied".into(),
        ));
    }
    let labels = labels_for(ds.outcomes(), cfg.survival_threshold_months);
    let labelled: Vec<bool> = labels.iter().map(|l| l.is_labelled()).collect();
    let ds = select(&ds, &labelled, &all)?;
    audit.record("labelled", &ds);
    let labels: Vec<SurvivalLabel> = labels.into_iter().filter(|l| l.is_labelled()).collect();
    let survived = labels
        .iter()
        .filter(|&&l| l == SurvivalLabel::Survived)
        .count();
    if survived == 0 || survived == labels.len() {
        return Err(PipelineError::Data(
            "the cohort holds a single outcome class".into(),
        ));
    }
    Ok(Cohort {
        dataset: ds,
        labels,
        audit,
    })
}

/// Seed stream of the model fitted on the whole cohort; fold models use
/// streams `0..folds` and the fold assignment `u64::MAX`.
pub fn final_seed(seed: u64) -> u64 {
    derive_seed(seed, u64::MAX - 1)
}

/// RFE over the whole cohort behind the same transforms as the final model.
pub fn rank_cohort(cohort: &Cohort, cfg: &RunConfig) -> Result<NamedRanking, PipelineError> {
    let eval = cfg.eval_config();
    let (features, x) = FeaturePipeline::fit(&cohort.dataset, &cohort.labels, eval.linearize)?;
    let y: Vec<f64> = cohort
        .labels
        .iter()
        .map(|&l| {
            if l == SurvivalLabel::Survived {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let svm = SvmConfig {
        seed: derive_seed(final_seed(cfg.seed()), 0),
        ..eval.svm
    };
    let ranking = rfe_rank(x.view(), &y, &svm)?;
    Ok(ranking.named(&features.attributes, Some(cfg.seed()))?)
}

pub fn train_final(cohort: &Cohort, cfg: &RunConfig) -> Result<EnsembleModel, PipelineError> {
    let (model, _) = EnsembleModel::fit(
        &cohort.dataset,
        &cohort.labels,
        &cfg.eval_config(),
        final_seed(cfg.seed()),
    )?;
    Ok(model)
}

/// Counts every subset row again by comparing the three classes directly
/// and checks that adding a source never grows a subset.
pub fn verify_report(
    report: &AgreementReport,
    preds: &[SourcePredictions],
    labels: &[SurvivalLabel],
) -> Result<(), PipelineError> {
    let truth: Vec<bool> = labels
        .iter()
        .map(|&l| l == SurvivalLabel::Survived)
        .collect();
    for subset in Subset::ALL {
        let (mut n, mut correct) = (0, 0);
        for (p, &t) in preds.iter().zip(&truth) {
            let votes: Vec<bool> = subset
                .sources()
                .iter()
                .map(|&s| {
                    let c = match s {
                        ModelSource::T => p.t,
                        ModelSource::L => p.l,
                        ModelSource::A => p.a,
                    };
                    c == PredictionClass::Survive
                })
                .collect();
            if votes.iter().all(|&v| v == votes[0]) {
                n += 1;
                correct += usize::from(votes[0] == t);
            }
        }
        let row = report
            .row(subset)
            .ok_or_else(|| PipelineError::Invariant(format!("report has no {subset} row")))?;
        if (row.n_patients, row.n_correct) != (n, correct) {
            return Err(PipelineError::Invariant(format!(
                "{subset} row counts {}/{} but a recount gives {correct}/{n}",
                row.n_correct, row.n_patients
            )));
        }
    }
    let n = |s| report.row(s).map_or(0, |r| r.n_patients);
    let pairs = [Subset::TL, Subset::TA, Subset::LA];
    if pairs.iter().any(|&p| n(Subset::TLA) > n(p)) {
        return Err(PipelineError::Invariant(
            "T+L+A covers more patients than a pairwise subset".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cv: CvResult,
    pub report: AgreementReport,
    pub sweep: Vec<SweepPoint>,
}

/// Cross-validated predictions, the checked agreement report and the sweep.
pub fn evaluate(cohort: &Cohort, cfg: &RunConfig) -> Result<Evaluation, PipelineError> {
    let eval = cfg.eval_config();
    let cv = cross_validate(&cohort.dataset, &cohort.labels, &eval)?;
    let preds = cv.source_predictions();
    let mut report = build_report(&preds, &cohort.labels)?;
    report.seed = Some(eval.seed);
    verify_report(&report, &preds, &cohort.labels)?;
    let k_values = cfg
        .sweep_k
        .clone()
        .unwrap_or_else(|| default_sweep_k(cohort.dataset.n_attributes()));
    let sweep = attribute_sweep(
        &cohort.dataset,
        &cohort.labels,
        &k_values,
        &eval,
        SweepVariant::Both,
    )?;
    Ok(Evaluation { cv, report, sweep })
}

fn outcomes(ds: &Dataset) -> Vec<TimedOutcome> {
    ds.outcomes()
        .iter()
        .map(TimedOutcome::from_record)
        .collect()
}

/// One curve per TNM stage over every patient in `ds`.
pub fn km_tnm(ds: &Dataset) -> Result<GroupedCurves<u8>, PipelineError> {
    let stages: Vec<u8> = ds.outcomes().iter().map(|o| o.tnm_stage.get()).collect();
    Ok(km_by_group(&outcomes(ds), &stages, &[1, 2, 3, 4])?)
}

/// Stage 2 and 3 patients of `ds` split by stage and by the learned model's
/// class.
pub fn km_prognosis(
    ds: &Dataset,
    model: &EnsembleModel,
) -> Result<GroupedCurves<PrognosisGroup>, PipelineError> {
    let staged: Vec<bool> = ds
        .outcomes()
        .iter()
        .map(|o| matches!(o.tnm_stage.get(), 2 | 3))
        .collect();
    let ds = select(ds, &staged, &vec![true; ds.n_attributes()])?;
    if ds.n_patients() == 0 {
        return Err(PipelineError::Data(
            "no stage 2 or 3 patients to group".into(),
        ));
    }
    let outputs = model.predict(&ds)?;
    let groups = ds
        .outcomes()
        .iter()
        .zip(&outputs)
        .map(|(o, out)| prognosis_group(o.tnm_stage, out.learned))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(km_by_group(&outcomes(&ds), &groups, &PrognosisGroup::ALL)?)
}

/// Reads the per-patient predictions file written by an evaluation.
pub fn parse_predictions(
    text: &str,
) -> Result<(Vec<SourcePredictions>, Vec<SurvivalLabel>), PipelineError> {
    let bad =
        |line: usize, msg: String| PipelineError::Data(format!("predictions line {line}: {msg}"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(1, format!("missing column `{name}`")))
    };
    let (label, t, l, a) = (col("label")?, col("T")?, col("L")?, col("A")?);
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let class = |j: usize| -> Result<PredictionClass, PipelineError> {
            rec.get(j).unwrap_or("").parse().map_err(|e| bad(line, e))
        };
        labels.push(match rec.get(label).unwrap_or("") {
            "survived" => SurvivalLabel::Survived,
            "died" => SurvivalLabel::Died,
            other => return Err(bad(line, format!("unknown label `{other}`"))),
        });
        preds.push(SourcePredictions {
            t: class(t)?,
            l: class(l)?,
            a: class(a)?,
        });
    }
    Ok((preds, labels))
}

/// File name to content, written in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
    /// Diagnostics for the error stream.
    pub warnings: Vec<String>,
}

impl Artifacts {
    pub fn insert(&mut self, name: &str, content: String) {
        self.files.insert(name.to_string(), content);
    }

    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        for (name, content) in &self.files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| PipelineError::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub folds: usize,
    pub k_top: usize,
    pub k_bottom: usize,
    pub input_patients: usize,
    pub cohort_patients: usize,
    pub cohort_attributes: usize,
    pub fold_summaries: Vec<crate::ensemble::FoldSummary>,
    pub files: Vec<String>,
}

/// The whole run on an already loaded dataset.
pub fn run_pipeline(ds: &Dataset, cfg: &RunConfig) -> Result<Artifacts, PipelineError> {
    let seed = cfg.seed();
    let cohort = prepare_cohort(ds, cfg)?;
    log::info!(
        "cohort: {} patients, {} attributes",
        cohort.dataset.n_patients(),
        cohort.dataset.n_attributes()
    );
    let ev = evaluate(&cohort, cfg)?;
    let model = train_final(&cohort, cfg)?;
    let ranking = rank_cohort(&cohort, cfg)?;
    if ranking.order != model.ranking {
        return Err(PipelineError::Invariant(
            "final model and cohort ranking disagree".into(),
        ));
    }
    let tnm = km_tnm(ds)?;
    let prognosis = km_prognosis(ds, &model)?;

    let mut a = Artifacts::default();
    a.warnings.extend(tnm.warnings.iter().cloned());
    a.warnings.extend(prognosis.warnings.iter().cloned());
    a.insert("audit.csv", cohort.audit.to_csv());
    a.insert("predictions.csv", ev.cv.to_csv());
    a.insert("report.csv", ev.report.to_csv());
    a.insert("report.json", ev.report.to_json());
    a.insert("sweep.csv", SweepPoint::to_csv(&ev.sweep));
    a.insert("km_tnm.csv", curves_to_csv(&tnm.curves, None));
    a.insert("km_prognosis.csv", curves_to_csv(&prognosis.curves, None));
    a.insert("model.json", model.to_json());
    a.insert("ranking.json", json(&ranking));
    let mut files: Vec<String> = a.files.keys().cloned().collect();
    files.push("manifest.json".into());
    files.sort();
    let manifest = Manifest {
        format: "selsurv-run/1".into(),
        seed,
        folds: cfg.folds,
        k_top: cfg.k_top,
        k_bottom: cfg.k_bottom,
        input_patients: ds.n_patients(),
        cohort_patients: cohort.dataset.n_patients(),
        cohort_attributes: cohort.dataset.n_attributes(),
        fold_summaries: ev.cv.folds.clone(),
        files,
    };
    a.insert("manifest.json", json(&manifest));
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::PredictionClass::*;
    use crate::synth::{gen_linear, matrix_to_dataset, LinearSpec};

    fn cfg(seed: u64) -> RunConfig {
        RunConfig::from_json(
            &format!(r#"{{"seed": {seed}, "dataset": "d.csv", "schema": "s.json", "out": "out"}}"#),
            Path::new("/tmp/run"),
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_paths() {
        let c = cfg(3);
        assert_eq!(c.dataset, PathBuf::from("/tmp/run/d.csv"));
        assert_eq!((c.folds, c.k_top, c.k_bottom), (5, 8, 6));
        assert_eq!(c.survival_threshold_months, 60);
        assert!(c.validate().is_ok());
        let e = c.eval_config();
        assert_eq!((e.seed, e.svm.seed, e.mlp.seed), (3, 3, 3));
    }

    #[test]
    fn config_errors() {
        let mut c = cfg(1);
        c.seed = None;
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        c.apply(&Overrides {
            seed: Some(4),
            ..Default::default()
        });
        assert!(c.validate().is_ok());
        c.out = c.dataset.clone();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("distinct"), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(RunConfig::from_json(r#"{"seed": 1, "bogus": 2}"#, Path::new(".")).is_err());
    }

    #[test]
    fn threshold_flows_into_exclusion() {
        let c = RunConfig::from_json(
            r#"{"seed": 1, "dataset": "a", "schema": "b", "out": "c", "survival_threshold_months": 36}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.exclusion.survival_threshold_months, 36);
    }

    #[test]
    fn stage_one_cohort_is_a_data_error() {
        let (x, y) = gen_linear(&LinearSpec {
            n: 8,
            d_informative: 1,
            d_noise: 1,
            separation: 1.0,
            seed: 0,
        })
        .unwrap();
        let ds = matrix_to_dataset(&x, &y).unwrap();
        let text = ds.to_csv().replace(",2\n", ",1\n").replace(",3\n", ",1\n");
        let ds = parse_dataset(&text, &ds.schema().attributes).unwrap();
        assert!(ds.outcomes().iter().all(|o| o.tnm_stage.get() == 1));
        let err = prepare_cohort(&ds, &cfg(0)).unwrap_err();
        assert!(matches!(err, PipelineError::Data(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn recount_catches_a_tampered_row() {
        let preds = vec![
            SourcePredictions {
                t: Survive,
                l: Survive,
                a: Die,
            },
            SourcePredictions {
                t: Die,
                l: Die,
                a: Die,
            },
        ];
        let labels = vec![SurvivalLabel::Survived, SurvivalLabel::Survived];
        let mut r = build_report(&preds, &labels).unwrap();
        assert!(verify_report(&r, &preds, &labels).is_ok());
        r.rows[0].n_correct += 1;
        let err = verify_report(&r, &preds, &labels).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn predictions_parse_back() {
        let text = "patient_id,fold,stage,label,T,L,A,p_learned,p_anti_base\n\
                    p1,0,2,survived,survive,die,die,0.2,0.7\n\
                    p2,1,3,died,die,die,survive,0.1,0.4\n";
        let (preds, labels) = parse_predictions(text).unwrap();
        assert_eq!(labels, vec![SurvivalLabel::Survived, SurvivalLabel::Died]);
        assert_eq!(preds[0].l, Die);
        assert_eq!(preds[1].a, Survive);
        assert!(parse_predictions("label,T,L\n").is_err());
        assert!(parse_predictions("label,T,L,A\nmaybe,die,die,die\n").is_err());
    }
}
