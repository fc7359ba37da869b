use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, stratified_folds, tnm_rule, EnsembleError, PredictionClass, SourcePredictions,
};
use crate::learners::{train_mlp, MlpConfig, MlpFile, MlpModel, Standardizer, SvmConfig};
use crate::preprocess::{
    apply_imputation, apply_linearization, fit_imputation, fit_linearization, ImputationPlan,
    LinearizationMap, SurvivalLabel,
};
use crate::ranking::{bottom_k, rfe_rank, top_k, Ranking};
use crate::tabular::{project, select, Cell, Dataset, TabularError};

/// Evaluation settings. Per-fold and per-model seeds are derived from `seed`;
/// the seeds inside `svm` and `mlp` are overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub folds: usize,
    pub k_top: usize,
    pub k_bottom: usize,
    pub linearize: bool,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
}

impl EvalConfig {
    pub fn new(seed: u64) -> Self {
        EvalConfig {
            seed,
            folds: 5,
            k_top: 8,
            k_bottom: 6,
            linearize: true,
            svm: SvmConfig::new(seed),
            mlp: MlpConfig::new(seed),
        }
    }

    fn svm_for(&self, seed: u64) -> SvmConfig {
        SvmConfig {
            seed: derive_seed(seed, 0),
            ..self.svm.clone()
        }
    }

    fn mlp_for(&self, seed: u64, stream: u64) -> MlpConfig {
        MlpConfig {
            seed: derive_seed(seed, stream),
            ..self.mlp.clone()
        }
    }
}

/// Train-fitted transforms from a dataset to a standardized feature matrix:
/// optional linearization, imputation, then standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub attributes: Vec<String>,
    pub linearization: Option<LinearizationMap>,
    pub imputation: ImputationPlan,
    pub standardizer: Standardizer,
}

fn complete_matrix(ds: &Dataset) -> Result<Array2<f64>, EnsembleError> {
    let mut x = Array2::zeros((ds.n_patients(), ds.n_attributes()));
    for (i, row) in ds.rows().iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            x[[i, j]] = match c {
                Cell::Present(v) => *v,
                Cell::Missing => {
                    return Err(TabularError::Degenerate(format!(
                        "missing value left after imputation at patient {}, attribute {}",
                        ds.patient_ids()[i],
                        ds.attributes()[j].name
                    ))
                    .into())
                }
            };
        }
    }
    Ok(x)
}

impl FeaturePipeline {
    /// Fits on `train` and returns the transformed training matrix.
    pub fn fit(
        train: &Dataset,
        labels: &[SurvivalLabel],
        linearize: bool,
    ) -> Result<(Self, Array2<f64>), EnsembleError> {
        let linearization = if linearize {
            Some(fit_linearization(train, labels)?)
        } else {
            None
        };
        let lin = match &linearization {
            Some(m) => apply_linearization(train, m)?,
            None => train.clone(),
        };
        let imputation = fit_imputation(&lin)?;
        let raw = complete_matrix(&apply_imputation(&lin, &imputation)?)?;
        let standardizer = Standardizer::fit(raw.view());
        let x = standardizer.transform(raw.view());
        let attributes = train.attributes().iter().map(|a| a.name.clone()).collect();
        Ok((
            FeaturePipeline {
                attributes,
                linearization,
                imputation,
                standardizer,
            },
            x,
        ))
    }

    /// Picks this pipeline's attributes from `ds` by name and transforms them.
    pub fn transform(&self, ds: &Dataset) -> Result<Array2<f64>, EnsembleError> {
        let ds = project(ds, &self.attributes)?;
        let lin = match &self.linearization {
            Some(m) => apply_linearization(&ds, m)?,
            None => ds,
        };
        let raw = complete_matrix(&apply_imputation(&lin, &self.imputation)?)?;
        Ok(self.standardizer.transform(raw.view()))
    }
}

fn columns(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(1), idx)
}

fn mlp_targets(labels: &[SurvivalLabel]) -> Result<Vec<f64>, EnsembleError> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| match PredictionClass::from_label(l) {
            Some(PredictionClass::Survive) => Ok(1.0),
            Some(PredictionClass::Die) => Ok(0.0),
            None => Err(EnsembleError::ExcludedLabel(i)),
        })
        .collect()
}

/// A learned model on the top attributes and an anti-learner on the bottom
/// ones, together with the transforms they were trained behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format: String,
    pub seed: u64,
    pub features: FeaturePipeline,
    /// Attribute names, most important first.
    pub ranking: Vec<String>,
    pub top: Vec<String>,
    pub bottom: Vec<String>,
    pub learned: MlpFile,
    /// Base model of the anti-learner; its class is inverted.
    pub anti_base: MlpFile,
}

/// Learned and anti-learned outputs for one patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOutputs {
    pub learned: PredictionClass,
    pub anti: PredictionClass,
    pub p_learned: f64,
    pub p_anti_base: f64,
}

const ENSEMBLE_FORMAT: &str = "selsurv-ensemble/1";

impl EnsembleModel {
    /// Fits transforms, ranks attributes on the training data, then trains
    /// both networks. `seed` drives every random choice.
    pub fn fit(
        train: &Dataset,
        labels: &[SurvivalLabel],
        cfg: &EvalConfig,
        seed: u64,
    ) -> Result<(Self, Ranking), EnsembleError> {
        let y01 = mlp_targets(labels)?;
        let ypm: Vec<f64> = y01.iter().map(|&v| 2.0 * v - 1.0).collect();
        let (features, x) = FeaturePipeline::fit(train, labels, cfg.linearize)?;
        let ranking = rfe_rank(x.view(), &ypm, &cfg.svm_for(seed))?;
        let top = top_k(&ranking, cfg.k_top)?;
        let bottom = bottom_k(&ranking, cfg.k_bottom)?;
        let l_cfg = cfg.mlp_for(seed, 1);
        let a_cfg = cfg.mlp_for(seed, 2);
        let learned = train_mlp(columns(&x, &top).view(), &y01, &l_cfg)?;
        let anti_base = train_mlp(columns(&x, &bottom).view(), &y01, &a_cfg)?;
        let name = |i: &usize| features.attributes[*i].clone();
        let model = EnsembleModel {
            format: ENSEMBLE_FORMAT.into(),
            seed,
            ranking: ranking.order.iter().map(name).collect(),
            top: top.iter().map(name).collect(),
            bottom: bottom.iter().map(name).collect(),
            learned: MlpFile::from_model(&learned, Some(&l_cfg)),
            anti_base: MlpFile::from_model(&anti_base, Some(&a_cfg)),
            features,
        };
        Ok((model, ranking))
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let m: EnsembleModel =
            serde_json::from_str(text).map_err(crate::learners::LearnError::from)?;
        if m.format != ENSEMBLE_FORMAT {
            return Err(crate::learners::LearnError::ModelFile(format!(
                "unknown format `{}`",
                m.format
            ))
            .into());
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    fn indices(&self, names: &[String]) -> Result<Vec<usize>, EnsembleError> {
        names
            .iter()
            .map(|n| {
                self.features
                    .attributes
                    .iter()
                    .position(|a| a == n)
                    .ok_or_else(|| {
                        crate::learners::LearnError::ModelFile(format!(
                            "`{n}` is not a model attribute"
                        ))
                        .into()
                    })
            })
            .collect()
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<ModelOutputs>, EnsembleError> {
        let x = self.features.transform(ds)?;
        let learned: MlpModel = self.learned.to_model()?;
        let anti: MlpModel = self.anti_base.to_model()?;
        let pl = learned.predict_batch(columns(&x, &self.indices(&self.top)?).view())?;
        let pa = anti.predict_batch(columns(&x, &self.indices(&self.bottom)?).view())?;
        Ok(pl
            .into_iter()
            .zip(pa)
            .map(|(p_learned, p_anti_base)| ModelOutputs {
                learned: PredictionClass::from_probability(p_learned),
                anti: PredictionClass::from_probability(p_anti_base).inverse(),
                p_learned,
                p_anti_base,
            })
            .collect())
    }
}

/// Out-of-fold predictions for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientPrediction {
    pub patient_id: String,
    pub fold: usize,
    pub stage: u8,
    pub label: SurvivalLabel,
    pub sources: SourcePredictions,
    pub p_learned: f64,
    pub p_anti_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub top: Vec<String>,
    pub bottom: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// In dataset order.
    pub predictions: Vec<PatientPrediction>,
    pub folds: Vec<FoldSummary>,
}

impl CvResult {
    pub fn source_predictions(&self) -> Vec<SourcePredictions> {
        self.predictions.iter().map(|p| p.sources).collect()
    }

    pub fn labels(&self) -> Vec<SurvivalLabel> {
        self.predictions.iter().map(|p| p.label).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("patient_id,fold,stage,label,T,L,A,p_learned,p_anti_base\n");
        for p in &self.predictions {
            let label = match p.label {
                SurvivalLabel::Survived => "survived",
                SurvivalLabel::Died => "died",
                SurvivalLabel::Excluded => "excluded",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.patient_id,
                p.fold,
                p.stage,
                label,
                p.sources.t,
                p.sources.l,
                p.sources.a,
                p.p_learned,
                p.p_anti_base
            ));
        }
        out
    }
}

struct Split {
    train: Dataset,
    train_labels: Vec<SurvivalLabel>,
    test: Dataset,
    test_rows: Vec<usize>,
}

fn split(
    ds: &Dataset,
    labels: &[SurvivalLabel],
    fold_of: &[usize],
    fold: usize,
    sanity: bool,
) -> Result<Split, EnsembleError> {
    let all = vec![true; ds.n_attributes()];
    let test_mask: Vec<bool> = fold_of.iter().map(|&f| sanity || f == fold).collect();
    let train_mask: Vec<bool> = fold_of.iter().map(|&f| sanity || f != fold).collect();
    Ok(Split {
        train: select(ds, &train_mask, &all)?,
        train_labels: labels
            .iter()
            .zip(&train_mask)
            .filter(|(_, &m)| m)
            .map(|(l, _)| *l)
            .collect(),
        test: select(ds, &test_mask, &all)?,
        test_rows: (0..ds.n_patients()).filter(|&i| test_mask[i]).collect(),
    })
}

fn check_inputs(
    ds: &Dataset,
    labels: &[SurvivalLabel],
    cfg: &EvalConfig,
) -> Result<Vec<usize>, EnsembleError> {
    if labels.len() != ds.n_patients() {
        return Err(EnsembleError::Alignment {
            predictions: ds.n_patients(),
            labels: labels.len(),
        });
    }
    let positive = mlp_targets(labels)?
        .iter()
        .map(|&v| v > 0.5)
        .collect::<Vec<_>>();
    stratified_folds(&positive, cfg.folds, derive_seed(cfg.seed, u64::MAX))
}

/// Stratified k-fold evaluation of all three sources. Every fitted step
/// (linearization, imputation, scaling, ranking, training) sees only the
/// training folds. `folds = 1` trains and tests on everything.
pub fn cross_validate(
    ds: &Dataset,
    labels: &[SurvivalLabel],
    cfg: &EvalConfig,
) -> Result<CvResult, EnsembleError> {
    let fold_of = check_inputs(ds, labels, cfg)?;
    let tnm = ds
        .outcomes()
        .iter()
        .map(|o| tnm_rule(o.tnm_stage))
        .collect::<Result<Vec<_>, _>>()?;

    let per_fold = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| -> Result<_, EnsembleError> {
            let seed = derive_seed(cfg.seed, fold as u64);
            let s = split(ds, labels, &fold_of, fold, cfg.folds == 1)?;
            let (model, _) = EnsembleModel::fit(&s.train, &s.train_labels, cfg, seed)?;
            let outputs = model.predict(&s.test)?;
            let summary = FoldSummary {
                fold,
                seed,
                n_train: s.train.n_patients(),
                n_test: s.test.n_patients(),
                top: model.top,
                bottom: model.bottom,
            };
            Ok((summary, s.test_rows, outputs))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut slots: Vec<Option<PatientPrediction>> = vec![None; ds.n_patients()];
    let mut folds = Vec::with_capacity(per_fold.len());
    for (summary, rows, outputs) in per_fold {
        for (&i, out) in rows.iter().zip(outputs) {
            slots[i] = Some(PatientPrediction {
                patient_id: ds.patient_ids()[i].clone(),
                fold: summary.fold,
                stage: ds.outcomes()[i].tnm_stage.get(),
                label: labels[i],
                sources: SourcePredictions {
                    t: tnm[i],
                    l: out.learned,
                    a: out.anti,
                },
                p_learned: out.p_learned,
                p_anti_base: out.p_anti_base,
            });
        }
        folds.push(summary);
    }
    let predictions = slots
        .into_iter()
        .map(|p| p.ok_or_else(|| EnsembleError::Folds("a patient was never tested".into())))
        .collect::<Result<_, _>>()?;
    Ok(CvResult { predictions, folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariant {
    Raw,
    Linearized,
    Both,
}

impl SweepVariant {
    fn flags(self) -> &'static [bool] {
        match self {
            SweepVariant::Raw => &[false],
            SweepVariant::Linearized => &[true],
            SweepVariant::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub linearized: bool,
    pub accuracy: f64,
}

impl SweepPoint {
    pub fn to_csv(points: &[SweepPoint]) -> String {
        let mut out = String::from("k,variant,accuracy\n");
        for p in points {
            let v = if p.linearized { "linearized" } else { "raw" };
            out.push_str(&format!("{},{},{}\n", p.k, v, p.accuracy));
        }
        out
    }
}

/// The default list of attribute counts to sweep, capped at `n`.
pub fn default_sweep_k(n: usize) -> Vec<usize> {
    [1, 2, 3, 4, 6, 8, 10, 12, 16, 20, 24]
        .into_iter()
        .filter(|&k| k <= n)
        .collect()
}

/// Mean cross-validated accuracy of the learned model on the top `k`
/// attributes for each `k`, with the ranking refitted inside every fold.
pub fn attribute_sweep(
    ds: &Dataset,
    labels: &[SurvivalLabel],
    k_values: &[usize],
    cfg: &EvalConfig,
    variant: SweepVariant,
) -> Result<Vec<SweepPoint>, EnsembleError> {
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k > ds.n_attributes()) {
        return Err(EnsembleError::K {
            k,
            n: ds.n_attributes(),
        });
    }
    let fold_of = check_inputs(ds, labels, cfg)?;
    let mut points = Vec::new();
    for &linearize in variant.flags() {
        let per_fold = (0..cfg.folds)
            .into_par_iter()
            .map(|fold| -> Result<Vec<f64>, EnsembleError> {
                let seed = derive_seed(cfg.seed, fold as u64);
                let s = split(ds, labels, &fold_of, fold, cfg.folds == 1)?;
                let y01 = mlp_targets(&s.train_labels)?;
                let ypm: Vec<f64> = y01.iter().map(|&v| 2.0 * v - 1.0).collect();
                let (features, x) = FeaturePipeline::fit(&s.train, &s.train_labels, linearize)?;
                let ranking = rfe_rank(x.view(), &ypm, &cfg.svm_for(seed))?;
                let xt = features.transform(&s.test)?;
                let truth: Vec<PredictionClass> = s
                    .test_rows
                    .iter()
                    .map(|&i| PredictionClass::from_label(labels[i]).expect("labelled"))
                    .collect();
                k_values
                    .iter()
                    .map(|&k| {
                        let cols = top_k(&ranking, k)?;
                        let m = train_mlp(columns(&x, &cols).view(), &y01, &cfg.mlp_for(seed, 1))?;
                        let p = m.predict_batch(columns(&xt, &cols).view())?;
                        let correct = p
                            .iter()
                            .zip(&truth)
                            .filter(|(&p, &t)| PredictionClass::from_probability(p) == t)
                            .count();
                        Ok(correct as f64 / truth.len() as f64)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (ki, &k) in k_values.iter().enumerate() {
            let accuracy = per_fold.iter().map(|f| f[ki]).sum::<f64>() / per_fold.len() as f64;
            points.push(SweepPoint {
                k,
                linearized: linearize,
                accuracy,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::labels_for;
    use crate::synth::{gen_linear, matrix_to_dataset, LinearSpec};

    fn small() -> (Dataset, Vec<SurvivalLabel>) {
        let (x, y) = gen_linear(&LinearSpec {
            n: 60,
            d_informative: 3,
            d_noise: 5,
            separation: 3.0,
            seed: 1,
        })
        .unwrap();
        let ds = matrix_to_dataset(&x, &y).unwrap();
        let labels = labels_for(ds.outcomes(), 60);
        (ds, labels)
    }

    fn quick(seed: u64) -> EvalConfig {
        let mut cfg = EvalConfig::new(seed);
        cfg.k_top = 3;
        cfg.k_bottom = 2;
        cfg.mlp.epochs = 300;
        cfg.mlp.learning_rate = 0.5;
        cfg
    }

    #[test]
    fn every_patient_is_tested_once() {
        let (ds, labels) = small();
        let r = cross_validate(&ds, &labels, &quick(2)).unwrap();
        assert_eq!(r.predictions.len(), 60);
        assert_eq!(r.folds.iter().map(|f| f.n_test).sum::<usize>(), 60);
        for p in &r.predictions {
            assert_eq!(
                p.sources.a,
                PredictionClass::from_probability(p.p_anti_base).inverse()
            );
        }
        let again = cross_validate(&ds, &labels, &quick(2)).unwrap();
        assert_eq!(r, again);
        // the planted columns lead every fold's ranking
        for f in &r.folds {
            let mut top = f.top.clone();
            top.sort();
            assert_eq!(top, vec!["x1", "x2", "x3"]);
        }
    }

    #[test]
    fn sanity_mode_beats_majority() {
        let (ds, labels) = small();
        let mut cfg = quick(3);
        cfg.folds = 1;
        let n = ds.n_attributes();
        let pts = attribute_sweep(&ds, &labels, &[n], &cfg, SweepVariant::Raw).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].accuracy >= 0.5);
    }

    #[test]
    fn sweep_shape_and_errors() {
        let (ds, labels) = small();
        let cfg = quick(4);
        let pts = attribute_sweep(&ds, &labels, &[1, 3], &cfg, SweepVariant::Both).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(SweepPoint::to_csv(&pts).lines().count(), 5);
        assert!(matches!(
            attribute_sweep(&ds, &labels, &[9], &cfg, SweepVariant::Raw),
            Err(EnsembleError::K { k: 9, n: 8 })
        ));
        assert_eq!(default_sweep_k(5), vec![1, 2, 3, 4]);
    }

    #[test]
    fn model_json_round_trip() {
        let (ds, labels) = small();
        let (m, _) = EnsembleModel::fit(&ds, &labels, &quick(5), 5).unwrap();
        let back = EnsembleModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(&ds).unwrap(), m.predict(&ds).unwrap());
    }
}
