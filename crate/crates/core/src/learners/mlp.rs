//! Feed-forward network with logistic units on every layer and a single
//! output, trained by full-batch gradient descent on mean cross-entropy.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_binary_labels, check_features, LearnError};

fn default_learning_rate() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    2000
}
fn default_hidden() -> Vec<usize> {
    vec![5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(seed: u64) -> Self {
        MlpConfig {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            hidden: default_hidden(),
            seed,
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::Config("learning rate must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(LearnError::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}

/// Layer `l` maps `layer_sizes[l]` inputs to `layer_sizes[l + 1]` outputs
/// through `weights[l]` (shape out × in) and `biases[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Gradient with the same shapes as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer buffers for one batch size, reused across epochs.
struct Workspace {
    acts: Vec<Array2<f64>>,
    /// d loss / d pre-activation of each layer.
    deltas: Vec<Array2<f64>>,
    grad: MlpGradient,
}

impl Workspace {
    fn new(m: &MlpModel, n: usize) -> Self {
        let outs = &m.layer_sizes[1..];
        Workspace {
            acts: outs.iter().map(|&k| Array2::zeros((n, k))).collect(),
            deltas: outs.iter().map(|&k| Array2::zeros((n, k))).collect(),
            grad: MlpGradient {
                weights: m
                    .weights
                    .iter()
                    .map(|w| Array2::zeros(w.raw_dim()))
                    .collect(),
                biases: m.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            },
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl MlpModel {
    /// All parameters zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, LearnError> {
        Self::check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Parameters drawn uniformly from [−0.5, 0.5], layer by layer, weights
    /// (row-major) before biases.
    pub fn seeded(layer_sizes: &[usize], seed: u64) -> Result<Self, LearnError> {
        let mut m = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, b) in m.weights.iter_mut().zip(&mut m.biases) {
            w.mapv_inplace(|_| rng.random_range(-0.5..=0.5));
            b.mapv_inplace(|_| rng.random_range(-0.5..=0.5));
        }
        Ok(m)
    }

    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self, LearnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(LearnError::ModelFile(
                "weights and biases must pair up".into(),
            ));
        }
        let mut sizes = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *sizes.last().unwrap() || b.len() != w.nrows() {
                return Err(LearnError::ModelFile("layer shapes do not chain".into()));
            }
            sizes.push(w.nrows());
        }
        Self::check_sizes(&sizes)?;
        if weights
            .iter()
            .flatten()
            .chain(biases.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(LearnError::ModelFile("non-finite parameter".into()));
        }
        Ok(MlpModel {
            layer_sizes: sizes,
            weights,
            biases,
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<(), LearnError> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(LearnError::Config(format!(
                "layer sizes must be positive and end in a single output, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Fills `ws.acts` for the batch `x`. Hidden layers hold activations;
    /// the output layer holds pre-activations.
    fn forward_into(&self, x: ArrayView2<'_, f64>, ws: &mut Workspace) {
        let layers = self.weights.len();
        for l in 0..layers {
            let (done, rest) = ws.acts.split_at_mut(l);
            let z = &mut rest[0];
            let input = if l == 0 { x } else { done[l - 1].view() };
            general_mat_mul(1.0, &input, &self.weights[l].t(), 0.0, z);
            let hidden = l + 1 < layers;
            for mut row in z.rows_mut() {
                for (v, &b) in row.iter_mut().zip(&self.biases[l]) {
                    *v += b;
                    if hidden {
                        *v = sigmoid(*v);
                    }
                }
            }
        }
    }

    /// Backpropagates from a completed forward pass into `ws.grad` and
    /// returns the loss.
    fn backward(&self, x: ArrayView2<'_, f64>, y: &[f64], ws: &mut Workspace) -> f64 {
        let layers = self.weights.len();
        let n = y.len() as f64;
        let out = &ws.acts[layers - 1];
        let loss = loss_from_output(out, y);
        // d loss / d z at the output: (sigmoid(z) − y) / n
        for (i, d) in ws.deltas[layers - 1].iter_mut().enumerate() {
            *d = (sigmoid(out[[i, 0]]) - y[i]) / n;
        }
        for l in (0..layers).rev() {
            let input = if l == 0 { x } else { ws.acts[l - 1].view() };
            general_mat_mul(1.0, &ws.deltas[l].t(), &input, 0.0, &mut ws.grad.weights[l]);
            let gb = &mut ws.grad.biases[l];
            gb.fill(0.0);
            for row in ws.deltas[l].rows() {
                *gb += &row;
            }
            if l > 0 {
                let (lower, upper) = ws.deltas.split_at_mut(l);
                let prev = &mut lower[l - 1];
                general_mat_mul(1.0, &upper[0], &self.weights[l], 0.0, prev);
                Zip::from(prev)
                    .and(&ws.acts[l - 1])
                    .for_each(|d, &a| *d *= a * (1.0 - a));
            }
        }
        loss
    }

    fn check_dims(&self, x: ArrayView2<'_, f64>) -> Result<(), LearnError> {
        if x.ncols() != self.n_inputs() {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_inputs(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, LearnError> {
        self.check_dims(x)?;
        let mut ws = Workspace::new(self, x.nrows());
        self.forward_into(x, &mut ws);
        Ok(ws
            .acts
            .last()
            .unwrap()
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }

    fn step(&mut self, grad: &MlpGradient, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            b.scaled_add(-lr, g);
        }
    }
}

/// Output probability for one input vector.
pub fn predict_mlp(m: &MlpModel, x: &[f64]) -> Result<f64, LearnError> {
    let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
    Ok(m.predict_batch(row)?[0])
}

/// Mean over samples of softplus(z) − y·z, the cross-entropy of sigmoid(z).
pub fn mean_cross_entropy(
    m: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> Result<f64, LearnError> {
    m.check_dims(x)?;
    check_labels_len(x, y)?;
    let mut ws = Workspace::new(m, x.nrows());
    m.forward_into(x, &mut ws);
    Ok(loss_from_output(ws.acts.last().unwrap(), y))
}

fn loss_from_output(z: &Array2<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    z.iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - t * z)
        .sum::<f64>()
        / n
}

fn check_labels_len(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<(), LearnError> {
    if x.nrows() != y.len() {
        return Err(LearnError::LabelCount {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(LearnError::Empty);
    }
    Ok(())
}

/// Analytic gradient of mean cross-entropy by backpropagation.
pub fn loss_gradient(
    m: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> Result<MlpGradient, LearnError> {
    m.check_dims(x)?;
    check_labels_len(x, y)?;
    let mut ws = Workspace::new(m, x.nrows());
    m.forward_into(x, &mut ws);
    m.backward(x, y, &mut ws);
    Ok(ws.grad)
}

pub fn train_mlp(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    cfg: &MlpConfig,
) -> Result<MlpModel, LearnError> {
    train_mlp_traced(x, y, cfg).map(|(m, _)| m)
}

/// Trains from the seeded initialization; also returns the loss before each
/// update followed by the final loss (`epochs + 1` values).
pub fn train_mlp_traced(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    cfg: &MlpConfig,
) -> Result<(MlpModel, Vec<f64>), LearnError> {
    cfg.validate()?;
    check_features(x)?;
    check_binary_labels(x, y, 0.0, 1.0)?;
    let mut sizes = vec![x.ncols()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut model = MlpModel::seeded(&sizes, cfg.seed)?;
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut ws = Workspace::new(&model, x.nrows());
    for epoch in 0..cfg.epochs {
        model.forward_into(x, &mut ws);
        let loss = model.backward(x, y, &mut ws);
        if loss.is_nan() {
            return Err(LearnError::NanLoss { epoch });
        }
        losses.push(loss);
        model.step(&ws.grad, cfg.learning_rate);
    }
    let final_loss = mean_cross_entropy(&model, x, y)?;
    if final_loss.is_nan() {
        return Err(LearnError::NanLoss { epoch: cfg.epochs });
    }
    losses.push(final_loss);
    Ok((model, losses))
}

/// On-disk form of a network: sizes, parameters at full precision and,
/// when known, the training config (including the seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFile {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub config: Option<MlpConfig>,
}

const MLP_FORMAT: &str = "selsurv-mlp/1";

impl MlpFile {
    pub fn from_model(m: &MlpModel, config: Option<&MlpConfig>) -> Self {
        MlpFile {
            format: MLP_FORMAT.into(),
            layer_sizes: m.layer_sizes.clone(),
            weights: m
                .weights
                .iter()
                .map(|w| w.outer_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            config: config.cloned(),
        }
    }

    pub fn to_model(&self) -> Result<MlpModel, LearnError> {
        if self.format != MLP_FORMAT {
            return Err(LearnError::ModelFile(format!(
                "unknown format `{}`",
                self.format
            )));
        }
        let weights = self
            .weights
            .iter()
            .map(|rows| {
                let cols = rows.first().map_or(0, Vec::len);
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(LearnError::ModelFile("ragged weight matrix".into()));
                }
                Array2::from_shape_vec((rows.len(), cols), flat)
                    .map_err(|e| LearnError::ModelFile(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let biases = self
            .biases
            .iter()
            .map(|b| Array1::from(b.clone()))
            .collect();
        let model = MlpModel::from_parts(weights, biases)?;
        if model.layer_sizes != self.layer_sizes {
            return Err(LearnError::ModelFile(
                "layer_sizes disagree with parameters".into(),
            ));
        }
        Ok(model)
    }
}

/// Pretty-printed JSON dump of the network; floats use the shortest
/// representation that parses back to the same value.
pub fn export_weights(m: &MlpModel, config: Option<&MlpConfig>) -> String {
    let mut s =
        serde_json::to_string_pretty(&MlpFile::from_model(m, config)).expect("model serializes");
    s.push('\n');
    s
}

pub fn import_weights(text: &str) -> Result<MlpModel, LearnError> {
    serde_json::from_str::<MlpFile>(text)?.to_model()
}
