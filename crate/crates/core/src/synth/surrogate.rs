use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::preprocess::{label_five_year, SurvivalLabel};
use crate::tabular::{
    AttributeKind, AttributeSpec, Cell, Dataset, OutcomeRecord, Role, TnmStage, VitalStatus,
};

const THRESHOLD_MONTHS: u32 = 60;

fn d_patients() -> usize {
    300
}
fn d_signal() -> usize {
    8
}
fn d_antisignal() -> usize {
    6
}
fn d_noise() -> usize {
    12
}
fn d_missing() -> f64 {
    0.10
}
fn d_true() -> bool {
    true
}
fn d_separation() -> f64 {
    0.6
}
fn d_stage2() -> f64 {
    0.75
}
fn d_stage3() -> f64 {
    0.40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    #[serde(default = "d_patients")]
    pub n_patients: usize,
    /// Attributes carrying label signal, including the non-monotone one
    /// when `nonlinear_attribute` is set.
    #[serde(default = "d_signal")]
    pub n_signal: usize,
    #[serde(default = "d_antisignal")]
    pub n_antisignal: usize,
    #[serde(default = "d_noise")]
    pub n_noise: usize,
    #[serde(default = "d_missing")]
    pub missing_rate: f64,
    #[serde(default = "d_true")]
    pub nonlinear_attribute: bool,
    /// Class-mean gap of each monotone signal attribute's latent score, in
    /// units of its noise standard deviation.
    #[serde(default = "d_separation")]
    pub signal_separation: f64,
    /// Probability of surviving 5 years by stage.
    #[serde(default = "d_stage2")]
    pub stage2_survival: f64,
    #[serde(default = "d_stage3")]
    pub stage3_survival: f64,
    pub seed: u64,
}

impl SurrogateSpec {
    pub fn new(seed: u64) -> Self {
        SurrogateSpec {
            n_patients: d_patients(),
            n_signal: d_signal(),
            n_antisignal: d_antisignal(),
            n_noise: d_noise(),
            missing_rate: d_missing(),
            nonlinear_attribute: d_true(),
            signal_separation: d_separation(),
            stage2_survival: d_stage2(),
            stage3_survival: d_stage3(),
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_patients < 20 || self.n_signal == 0 || self.n_antisignal == 0 || self.n_noise == 0
        {
            return Err(SynthError::Spec(
                "surrogate needs at least 20 patients and positive attribute counts".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.missing_rate) {
            return Err(SynthError::Spec(format!(
                "missing_rate must lie in [0, 0.5], got {}",
                self.missing_rate
            )));
        }
        if !(self.signal_separation >= 0.0 && self.signal_separation.is_finite())
            || !prob(self.stage2_survival)
            || !prob(self.stage3_survival)
        {
            return Err(SynthError::Spec(
                "separation and survival probabilities out of range".into(),
            ));
        }
        Ok(())
    }
}

/// Names of the attributes planted in each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttributes {
    pub signal: Vec<String>,
    pub antisignal: Vec<String>,
    pub noise: Vec<String>,
    pub nonlinear: Option<String>,
    /// Attributes the exclusion protocol should drop by role.
    pub role_flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub dataset: Dataset,
    pub truth: PlantedAttributes,
}

struct Patient {
    outcome: OutcomeRecord,
    /// Latent 5-year class, +1 survive, −1 die.
    class: f64,
    label: SurvivalLabel,
}

fn draw_patient(spec: &SurrogateSpec, rng: &mut ChaCha8Rng) -> Patient {
    let stage = if rng.random_bool(0.5) { 2 } else { 3 };
    let p = if stage == 2 {
        spec.stage2_survival
    } else {
        spec.stage3_survival
    };
    let survives = rng.random_bool(p);
    let disease_death = if !survives {
        Some(rng.random_range(3..THRESHOLD_MONTHS))
    } else if rng.random_bool(0.3) {
        Some(rng.random_range(THRESHOLD_MONTHS..=140))
    } else {
        None
    };
    let follow_up = if rng.random_bool(0.12) {
        rng.random_range(6..THRESHOLD_MONTHS)
    } else {
        rng.random_range(THRESHOLD_MONTHS..=150)
    };
    let other_death = rng.random_bool(0.06).then(|| rng.random_range(6..=150u32));

    let mut months = follow_up;
    let mut status = VitalStatus::Alive;
    if let Some(t) = disease_death.filter(|&t| t <= months) {
        months = t;
        status = VitalStatus::DeadOfDisease;
    }
    if let Some(t) = other_death.filter(|&t| t < months) {
        months = t;
        status = VitalStatus::DeadOther;
    }
    let outcome = OutcomeRecord {
        survival_months: months,
        vital_status: status,
        tnm_stage: TnmStage::new(stage).expect("valid stage"),
    };
    Patient {
        label: label_five_year(&outcome, THRESHOLD_MONTHS),
        class: if survives { 1.0 } else { -1.0 },
        outcome,
    }
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (level, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return level as f64;
        }
    }
    (probs.len() - 1) as f64
}

/// A cohort of stage 2 and 3 patients shaped like the clinical data: label
/// signal in `n_signal` attributes, an anti-learnable block, noise, a few
/// role-flagged attributes the protocol removes, and uniform missingness.
///
/// The anti-learnable block sits on the positive-semidefinite boundary of
/// the two-level Gram construction: there the class-contrast eigenvalue is
/// zero, i.e. both classes have the same mean. It is realized in
/// `n_antisignal` dimensions by centering Gaussian columns per class over the
/// labelled patients, after missingness is applied. A held-out point is then
/// anti-correlated with the rest of its own class, and any fit on the
/// remaining points is pulled towards the wrong class.
pub fn gen_clinical_surrogate(spec: &SurrogateSpec) -> Result<Surrogate, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_patients;
    let patients: Vec<Patient> = (0..n).map(|_| draw_patient(spec, &mut rng)).collect();

    let mut specs = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut truth = PlantedAttributes {
        signal: vec![],
        antisignal: vec![],
        noise: vec![],
        nonlinear: None,
        role_flagged: vec![],
    };
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    for j in 0..spec.n_signal {
        if spec.nonlinear_attribute && j == spec.n_signal - 1 {
            // extreme levels carry the poor prognosis
            let col = patients
                .iter()
                .map(|p| {
                    let probs = if p.class > 0.0 {
                        [0.15, 0.35, 0.35, 0.15]
                    } else {
                        [0.35, 0.15, 0.15, 0.35]
                    };
                    categorical(&mut rng, &probs)
                })
                .collect();
            specs.push(AttributeSpec::feature(
                "flipl",
                AttributeKind::Ordinal { levels: 4 },
            ));
            columns.push(col);
            truth.signal.push("flipl".into());
            truth.nonlinear = Some("flipl".into());
            continue;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let (kind, map): (AttributeKind, fn(f64) -> f64) = match j % 3 {
            0 => (AttributeKind::Continuous, |z| 50.0 + 10.0 * z),
            1 => (AttributeKind::Binary, |z| if z > 0.0 { 1.0 } else { 0.0 }),
            _ => (AttributeKind::Ordinal { levels: 4 }, |z| {
                [-0.75, 0.0, 0.75].iter().filter(|&&c| z > c).count() as f64
            }),
        };
        let col = patients
            .iter()
            .map(|p| map(sign * spec.signal_separation * p.class / 2.0 + normal(&mut rng)))
            .collect();
        let name = format!("signal_{}", j + 1);
        specs.push(AttributeSpec::feature(name.clone(), kind));
        columns.push(col);
        truth.signal.push(name);
    }

    let anti_start = columns.len();
    for k in 0..spec.n_antisignal {
        let name = format!("anti_{}", k + 1);
        columns.push((0..n).map(|_| normal(&mut rng)).collect());
        specs.push(AttributeSpec::feature(
            name.clone(),
            AttributeKind::Continuous,
        ));
        truth.antisignal.push(name);
    }

    for k in 0..spec.n_noise {
        let name = format!("noise_{}", k + 1);
        if k % 2 == 0 {
            columns.push((0..n).map(|_| 50.0 + 10.0 * normal(&mut rng)).collect());
            specs.push(AttributeSpec::feature(
                name.clone(),
                AttributeKind::Continuous,
            ));
        } else {
            columns.push(
                (0..n)
                    .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
                    .collect(),
            );
            specs.push(AttributeSpec::feature(name.clone(), AttributeKind::Binary));
        }
        truth.noise.push(name);
    }

    // stage-derived and post-operative attributes, removed by the protocol
    let stage = |p: &Patient| p.outcome.tnm_stage.get();
    let dukes = patients
        .iter()
        .map(|p| {
            let base = f64::from(stage(p) - 1);
            if rng.random_bool(0.1) {
                (base + if rng.random_bool(0.5) { 1.0 } else { -1.0 }).clamp(0.0, 3.0)
            } else {
                base
            }
        })
        .collect();
    let chemo = patients
        .iter()
        .map(|p| {
            f64::from(u8::from(rng.random_bool(if stage(p) == 2 {
                0.3
            } else {
                0.7
            })))
        })
        .collect();
    let ratio = patients
        .iter()
        .map(|p| {
            if stage(p) == 2 {
                rng.random_range(0.0..0.3)
            } else {
                rng.random_range(0.1..0.8)
            }
        })
        .collect();
    for (name, kind, role, col) in [
        (
            "dukes_stage",
            AttributeKind::Ordinal { levels: 4 },
            Role::TnmDerived,
            dukes,
        ),
        (
            "chemotherapy",
            AttributeKind::Binary,
            Role::PostOperative,
            chemo,
        ),
        (
            "node_ratio",
            AttributeKind::Continuous,
            Role::Compound,
            ratio,
        ),
    ] {
        specs.push(AttributeSpec::new(name, kind, &[role]));
        columns.push(col);
        truth.role_flagged.push(name.into());
    }

    let d = columns.len();
    let total = n * d;
    let n_missing = (spec.missing_rate * total as f64).round() as usize;
    let mut missing = vec![false; total];
    for idx in rand::seq::index::sample(&mut rng, total, n_missing) {
        missing[idx] = true;
    }
    let is_missing = |i: usize, j: usize| missing[i * d + j];

    let anti = anti_start..anti_start + spec.n_antisignal;
    for (col, j) in columns[anti.clone()].iter_mut().zip(anti) {
        for class in [SurvivalLabel::Survived, SurvivalLabel::Died] {
            let members: Vec<usize> = (0..n)
                .filter(|&i| patients[i].label == class && !is_missing(i, j))
                .collect();
            if members.is_empty() {
                continue;
            }
            let mean = members.iter().map(|&i| col[i]).sum::<f64>() / members.len() as f64;
            for &i in &members {
                col[i] -= mean;
            }
        }
        for v in col.iter_mut() {
            *v = 50.0 + 10.0 * *v;
        }
    }

    let rows = (0..n)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if is_missing(i, j) {
                        Cell::Missing
                    } else {
                        Cell::Present(columns[j][i])
                    }
                })
                .collect()
        })
        .collect();
    let ids = (1..=n).map(|i| format!("P{i:04}")).collect();
    let outcomes = patients.into_iter().map(|p| p.outcome).collect();
    Ok(Surrogate {
        dataset: Dataset::new(specs, ids, rows, outcomes)?,
        truth,
    })
}
