use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{balanced_labels, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiSpec {
    pub n: usize,
    pub rho_within: f64,
    pub rho_between: f64,
    pub seed: u64,
}

/// Upper end of the admissible `rho_between` interval: with `m = n/2` points
/// per class the class-contrast eigenvalue of the Gram matrix is
/// `1 + (m − 1)ρw − mρb`, which must stay non-negative.
pub fn admissible_rho_between(n: usize, rho_within: f64) -> f64 {
    rho_within + (1.0 - rho_within) / (n as f64 / 2.0)
}

fn validate(spec: &AntiSpec) -> Result<(), SynthError> {
    if spec.n < 4 || !spec.n.is_multiple_of(2) {
        return Err(SynthError::Spec(format!(
            "n must be even and at least 4, got {}",
            spec.n
        )));
    }
    let floor = -1.0 / (spec.n as f64 - 1.0);
    if !(spec.rho_within > floor && spec.rho_within < 1.0) {
        return Err(SynthError::Spec(format!(
            "rho_within must lie in ({floor}, 1), got {}",
            spec.rho_within
        )));
    }
    let upper = admissible_rho_between(spec.n, spec.rho_within);
    if !(spec.rho_between > spec.rho_within && spec.rho_between <= upper) {
        return Err(SynthError::Psd {
            n: spec.n,
            rho_within: spec.rho_within,
            rho_between: spec.rho_between,
            upper,
        });
    }
    Ok(())
}

/// Rows are feature vectors whose Gram matrix is 1 on the diagonal,
/// `rho_within` within a class and `rho_between` across classes. Because
/// `rho_between > rho_within`, every point is closer on average to the other
/// class than to the rest of its own.
pub fn gen_antilearnable(spec: &AntiSpec) -> Result<(Array2<f64>, Vec<f64>), SynthError> {
    validate(spec)?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y = balanced_labels(n, &mut rng);
    let gram = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if y[i] == y[j] {
            spec.rho_within
        } else {
            spec.rho_between
        }
    });
    let eig = SymmetricEigen::new(gram);
    let min = eig.eigenvalues.min();
    if min < -1e-9 {
        return Err(SynthError::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    // symmetric square root V diag(√λ) Vᵀ
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let x = Array2::from_shape_fn((n, n), |(i, j)| root[(i, j)]);
    Ok((x, y))
}
