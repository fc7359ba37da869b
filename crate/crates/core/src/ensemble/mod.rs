//! The three prediction sources, agreement gating and its accuracy report,
//! cross-validated evaluation and the attribute-count sweep.

mod cv;
mod evaluate;
mod report;

pub use cv::{derive_seed, stratified_folds};
pub use evaluate::{
    attribute_sweep, cross_validate, default_sweep_k, CvResult, EnsembleModel, EvalConfig,
    FeaturePipeline, FoldSummary, ModelOutputs, PatientPrediction, SweepPoint, SweepVariant,
};
pub use report::{build_report, format_percent, AgreementReport, ReportRow};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{predict_linear, predict_mlp, LearnError, LinearModel, MlpModel};
use crate::preprocess::{PreprocessError, SurvivalLabel};
use crate::ranking::RankError;
use crate::tabular::{TabularError, TnmStage};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("TNM stage {0} is outside the modelled stages 2 and 3")]
    StageOutOfScope(u8),
    #[error("no prediction from source {0}")]
    MissingSource(ModelSource),
    #[error("nothing to consult")]
    EmptyConsult,
    #[error("{predictions} prediction rows but {labels} labels")]
    Alignment { predictions: usize, labels: usize },
    #[error("patient {0} is excluded from labelling and cannot be scored")]
    ExcludedLabel(usize),
    #[error("invalid fold setup: {0}")]
    Folds(String),
    #[error("k = {k} is outside 1..={n}")]
    K { k: usize, n: usize },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionClass {
    Survive,
    Die,
}

impl PredictionClass {
    pub fn inverse(self) -> Self {
        match self {
            PredictionClass::Survive => PredictionClass::Die,
            PredictionClass::Die => PredictionClass::Survive,
        }
    }

    /// `None` for excluded patients.
    pub fn from_label(label: SurvivalLabel) -> Option<Self> {
        match label {
            SurvivalLabel::Survived => Some(PredictionClass::Survive),
            SurvivalLabel::Died => Some(PredictionClass::Die),
            SurvivalLabel::Excluded => None,
        }
    }

    /// Probability of survival ≥ 0.5 → Survive.
    pub fn from_probability(p: f64) -> Self {
        if p >= 0.5 {
            PredictionClass::Survive
        } else {
            PredictionClass::Die
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PredictionClass::Survive => "survive",
            PredictionClass::Die => "die",
        }
    }
}

impl fmt::Display for PredictionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PredictionClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "survive" => Ok(PredictionClass::Survive),
            "die" => Ok(PredictionClass::Die),
            other => Err(format!("unknown class `{other}`")),
        }
    }
}

/// T: TNM rule, L: learned model, A: anti-learned model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelSource {
    T,
    L,
    A,
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSource::T => "T",
            ModelSource::L => "L",
            ModelSource::A => "A",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectiveDecision {
    Predicted(PredictionClass),
    Abstain,
}

/// The seven source combinations, singletons first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "L")]
    L,
    #[serde(rename = "A")]
    A,
    #[serde(rename = "T+L")]
    TL,
    #[serde(rename = "T+A")]
    TA,
    #[serde(rename = "L+A")]
    LA,
    #[serde(rename = "T+L+A")]
    TLA,
}

impl Subset {
    pub const ALL: [Subset; 7] = [
        Subset::T,
        Subset::L,
        Subset::A,
        Subset::TL,
        Subset::TA,
        Subset::LA,
        Subset::TLA,
    ];

    pub fn sources(self) -> &'static [ModelSource] {
        use ModelSource::*;
        match self {
            Subset::T => &[T],
            Subset::L => &[L],
            Subset::A => &[A],
            Subset::TL => &[T, L],
            Subset::TA => &[T, A],
            Subset::LA => &[L, A],
            Subset::TLA => &[T, L, A],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Subset::T => "T",
            Subset::L => "L",
            Subset::A => "A",
            Subset::TL => "T+L",
            Subset::TA => "T+A",
            Subset::LA => "L+A",
            Subset::TLA => "T+L+A",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Subset::ALL.into_iter().find(|x| x.label() == s)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One patient's prediction from each source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePredictions {
    pub t: PredictionClass,
    pub l: PredictionClass,
    pub a: PredictionClass,
}

impl SourcePredictions {
    pub fn get(&self, s: ModelSource) -> PredictionClass {
        match s {
            ModelSource::T => self.t,
            ModelSource::L => self.l,
            ModelSource::A => self.a,
        }
    }

    pub fn as_map(&self) -> BTreeMap<ModelSource, PredictionClass> {
        [ModelSource::T, ModelSource::L, ModelSource::A]
            .into_iter()
            .map(|s| (s, self.get(s)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum PrognosisGroup {
    TNM2_PredSurvive,
    TNM2_PredDie,
    TNM3_PredSurvive,
    TNM3_PredDie,
}

impl PrognosisGroup {
    pub const ALL: [PrognosisGroup; 4] = [
        PrognosisGroup::TNM2_PredSurvive,
        PrognosisGroup::TNM2_PredDie,
        PrognosisGroup::TNM3_PredSurvive,
        PrognosisGroup::TNM3_PredDie,
    ];
}

impl fmt::Display for PrognosisGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn modelled_stage(stage: TnmStage) -> Result<u8, EnsembleError> {
    match stage.get() {
        s @ (2 | 3) => Ok(s),
        s => Err(EnsembleError::StageOutOfScope(s)),
    }
}

/// Stage 2 survives, stage 3 does not.
pub fn tnm_rule(stage: TnmStage) -> Result<PredictionClass, EnsembleError> {
    Ok(match modelled_stage(stage)? {
        2 => PredictionClass::Survive,
        _ => PredictionClass::Die,
    })
}

/// A model that assigns one of the two classes to a feature vector.
pub trait Classifier {
    fn n_inputs(&self) -> usize;
    fn classify(&self, x: &[f64]) -> Result<PredictionClass, LearnError>;
}

/// +1 is Survive.
impl Classifier for LinearModel {
    fn n_inputs(&self) -> usize {
        self.weights.len()
    }
    fn classify(&self, x: &[f64]) -> Result<PredictionClass, LearnError> {
        Ok(if predict_linear(self, x)? > 0 {
            PredictionClass::Survive
        } else {
            PredictionClass::Die
        })
    }
}

/// Output is the probability of survival.
impl Classifier for MlpModel {
    fn n_inputs(&self) -> usize {
        MlpModel::n_inputs(self)
    }
    fn classify(&self, x: &[f64]) -> Result<PredictionClass, LearnError> {
        Ok(PredictionClass::from_probability(predict_mlp(self, x)?))
    }
}

/// Emits the opposite of its base model's class.
#[derive(Debug, Clone, PartialEq)]
pub struct AntiLearner<C>(pub C);

impl<C: Classifier> Classifier for AntiLearner<C> {
    fn n_inputs(&self) -> usize {
        self.0.n_inputs()
    }
    fn classify(&self, x: &[f64]) -> Result<PredictionClass, LearnError> {
        antilearn_predict(&self.0, x)
    }
}

pub fn antilearn_predict<C: Classifier + ?Sized>(
    base: &C,
    x: &[f64],
) -> Result<PredictionClass, LearnError> {
    Ok(base.classify(x)?.inverse())
}

/// Predicted when every consulted source gives the same class.
pub fn agreement_filter(
    preds: &BTreeMap<ModelSource, PredictionClass>,
    consult: &[ModelSource],
) -> Result<SelectiveDecision, EnsembleError> {
    let mut classes = consult.iter().map(|s| {
        preds
            .get(s)
            .copied()
            .ok_or(EnsembleError::MissingSource(*s))
    });
    let first = classes.next().ok_or(EnsembleError::EmptyConsult)??;
    for c in classes {
        if c? != first {
            return Ok(SelectiveDecision::Abstain);
        }
    }
    Ok(SelectiveDecision::Predicted(first))
}

/// The clinical rule: trust the learned model when it agrees with the stage.
pub fn confidence_rule(
    stage: TnmStage,
    learned: PredictionClass,
) -> Result<SelectiveDecision, EnsembleError> {
    Ok(match (modelled_stage(stage)?, learned) {
        (2, PredictionClass::Survive) => SelectiveDecision::Predicted(PredictionClass::Survive),
        (3, PredictionClass::Die) => SelectiveDecision::Predicted(PredictionClass::Die),
        _ => SelectiveDecision::Abstain,
    })
}

pub fn prognosis_group(
    stage: TnmStage,
    learned: PredictionClass,
) -> Result<PrognosisGroup, EnsembleError> {
    use PredictionClass::*;
    Ok(match (modelled_stage(stage)?, learned) {
        (2, Survive) => PrognosisGroup::TNM2_PredSurvive,
        (2, Die) => PrognosisGroup::TNM2_PredDie,
        (_, Survive) => PrognosisGroup::TNM3_PredSurvive,
        (_, Die) => PrognosisGroup::TNM3_PredDie,
    })
}
