//! Seeded generators: planted-signal matrices, anti-learnable matrices and a
//! clinical-shaped surrogate cohort.

mod antilearn;
mod surrogate;

pub use antilearn::{admissible_rho_between, gen_antilearnable, AntiSpec};
pub use surrogate::{gen_clinical_surrogate, PlantedAttributes, Surrogate, SurrogateSpec};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{
    AttributeKind, AttributeSpec, Cell, Dataset, OutcomeRecord, TabularError, TnmStage, VitalStatus,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error(
        "rho_between = {rho_between} is not admissible for n = {n}, rho_within = {rho_within}; \
         it must lie in ({rho_within}, {upper}]"
    )]
    Psd {
        n: usize,
        rho_within: f64,
        rho_between: f64,
        upper: f64,
    },
    #[error("Gram matrix has eigenvalue {0} below -1e-9")]
    NotPsd(f64),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub n: usize,
    pub d_informative: usize,
    pub d_noise: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Balanced ±1 labels in a seeded random order.
fn balanced_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
    y.shuffle(rng);
    y
}

/// Informative columns are `±separation/2 + N(0, 1)` by class; the rest are
/// standard normal. Informative columns come first.
pub fn gen_linear(spec: &LinearSpec) -> Result<(Array2<f64>, Vec<f64>), SynthError> {
    if spec.n < 4
        || spec.d_informative == 0
        || !(spec.separation > 0.0 && spec.separation.is_finite())
    {
        return Err(SynthError::Spec(
            "linear spec needs n >= 4, d_informative >= 1 and a positive separation".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y = balanced_labels(spec.n, &mut rng);
    let d = spec.d_informative + spec.d_noise;
    let mut x = Array2::zeros((spec.n, d));
    for i in 0..spec.n {
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let shift = if j < spec.d_informative {
                y[i] * spec.separation / 2.0
            } else {
                0.0
            };
            x[[i, j]] = shift + noise;
        }
    }
    Ok((x, y))
}

/// Two 2-D Gaussian blobs separated along the first axis; points that would
/// fall inside the central band of width `margin` are redrawn, so the classes
/// are separable with at least that gap.
pub fn gen_separable_blobs(
    n: usize,
    margin: f64,
    seed: u64,
) -> Result<(Array2<f64>, Vec<f64>), SynthError> {
    if n < 2 || !(margin > 0.0 && margin.is_finite()) {
        return Err(SynthError::Spec(
            "blobs need n >= 2 and a positive margin".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = balanced_labels(n, &mut rng);
    let centre = margin / 2.0 + 1.0;
    let mut x = Array2::zeros((n, 2));
    for i in 0..n {
        loop {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let x0 = y[i] * centre + a;
            if y[i] * x0 >= margin / 2.0 {
                x[[i, 0]] = x0;
                x[[i, 1]] = b;
                break;
            }
        }
    }
    Ok((x, y))
}

/// Wraps a labelled matrix as a dataset with continuous columns `x1..xd`.
/// Labels are carried by the outcome columns: +1 becomes alive at 60 months
/// (stage 2), −1 a disease death at 30 months (stage 3).
pub fn matrix_to_dataset(x: &Array2<f64>, y: &[f64]) -> Result<Dataset, SynthError> {
    let attributes = (1..=x.ncols())
        .map(|j| AttributeSpec::feature(format!("x{j}"), AttributeKind::Continuous))
        .collect();
    let ids = (1..=x.nrows()).map(|i| format!("s{i:04}")).collect();
    let rows = x
        .outer_iter()
        .map(|r| r.iter().map(|&v| Cell::Present(v)).collect())
        .collect();
    let outcomes = y
        .iter()
        .map(|&l| {
            let (months, status, stage) = if l > 0.0 {
                (60, VitalStatus::Alive, 2)
            } else {
                (30, VitalStatus::DeadOfDisease, 3)
            };
            OutcomeRecord {
                survival_months: months,
                vital_status: status,
                tnm_stage: TnmStage::new(stage).expect("valid stage"),
            }
        })
        .collect();
    Ok(Dataset::new(attributes, ids, rows, outcomes)?)
}

/// A generator request as read from a spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Linear(LinearSpec),
    Antilearnable(AntiSpec),
    Surrogate(SurrogateSpec),
}

impl GeneratorSpec {
    pub fn seed(&self) -> u64 {
        match self {
            GeneratorSpec::Linear(s) => s.seed,
            GeneratorSpec::Antilearnable(s) => s.seed,
            GeneratorSpec::Surrogate(s) => s.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            GeneratorSpec::Linear(s) => s.seed = seed,
            GeneratorSpec::Antilearnable(s) => s.seed = seed,
            GeneratorSpec::Surrogate(s) => s.seed = seed,
        }
    }

    pub fn generate(&self) -> Result<Dataset, SynthError> {
        match self {
            GeneratorSpec::Linear(s) => {
                let (x, y) = gen_linear(s)?;
                matrix_to_dataset(&x, &y)
            }
            GeneratorSpec::Antilearnable(s) => {
                let (x, y) = gen_antilearnable(s)?;
                matrix_to_dataset(&x, &y)
            }
            GeneratorSpec::Surrogate(s) => Ok(gen_clinical_surrogate(s)?.dataset),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{predict_linear, train_linear_svm, SvmConfig};

    #[test]
    fn linear_shapes_and_determinism() {
        let spec = LinearSpec {
            n: 10,
            d_informative: 1,
            d_noise: 0,
            separation: 2.0,
            seed: 4,
        };
        let (x, y) = gen_linear(&spec).unwrap();
        assert_eq!(x.dim(), (10, 1));
        assert_eq!(y.iter().filter(|&&v| v > 0.0).count(), 5);
        assert_eq!(gen_linear(&spec).unwrap(), (x, y));
        assert!(gen_linear(&LinearSpec {
            n: 3,
            ..spec.clone()
        })
        .is_err());
        assert!(gen_linear(&LinearSpec {
            d_informative: 0,
            ..spec
        })
        .is_err());
    }

    #[test]
    fn wide_separation_is_learnable() {
        let spec = LinearSpec {
            n: 40,
            d_informative: 2,
            d_noise: 3,
            separation: 10.0,
            seed: 8,
        };
        let (x, y) = gen_linear(&spec).unwrap();
        let m = train_linear_svm(x.view(), &y, &SvmConfig::new(8)).unwrap();
        for (row, &yi) in x.outer_iter().zip(&y) {
            assert_eq!(
                f64::from(predict_linear(&m, row.as_slice().unwrap()).unwrap()),
                yi
            );
        }
    }

    #[test]
    fn blobs_respect_margin() {
        let (x, y) = gen_separable_blobs(40, 1.0, 7).unwrap();
        for (row, &yi) in x.outer_iter().zip(&y) {
            assert!(yi * row[0] >= 0.5);
        }
    }

    #[test]
    fn matrix_dataset_labels_round_trip() {
        use crate::preprocess::{labels_for, SurvivalLabel};
        let (x, y) = gen_linear(&LinearSpec {
            n: 8,
            d_informative: 1,
            d_noise: 1,
            separation: 1.0,
            seed: 0,
        })
        .unwrap();
        let ds = matrix_to_dataset(&x, &y).unwrap();
        let labels = labels_for(ds.outcomes(), 60);
        for (l, &yi) in labels.iter().zip(&y) {
            assert_eq!(*l == SurvivalLabel::Survived, yi > 0.0);
        }
    }

    #[test]
    fn spec_file_form() {
        let text = r#"{"generator": "antilearnable", "n": 40, "rho_within": 0.1, "rho_between": 0.14, "seed": 2}"#;
        let spec: GeneratorSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.seed(), 2);
        assert_eq!(spec.generate().unwrap().n_attributes(), 40);
    }
}
