use std::fs;
use std::path::PathBuf;

use ndarray::{array, Array2, Axis};
use proptest::prelude::*;

use selsurv::learners::{
    export_weights, import_weights, predict_linear, predict_mlp, train_linear_svm, train_mlp,
    MlpConfig, SvmConfig,
};
use selsurv::ranking::rfe_rank;
use selsurv::synth::{gen_linear, gen_separable_blobs, LinearSpec};

const XOR_SEED: u64 = 0;

fn xor_config() -> MlpConfig {
    MlpConfig {
        learning_rate: 0.5,
        epochs: 20_000,
        hidden: vec![2],
        seed: XOR_SEED,
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Set `UPDATE_GOLDEN=1` to rewrite the fixture after an intended change to
/// initialization or training.
#[test]
fn xor_golden_weights() {
    let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let y = [0.0, 1.0, 1.0, 0.0];
    let cfg = xor_config();
    let m = train_mlp(x.view(), &y, &cfg).unwrap();
    for (row, &t) in x.axis_iter(Axis(0)).zip(&y) {
        let p = predict_mlp(&m, row.as_slice().unwrap()).unwrap();
        assert_eq!(p > 0.5, t > 0.5, "input {row} gave {p}");
    }
    assert!(predict_mlp(&m, &[1.0, 0.0]).unwrap() > 0.5);

    let text = export_weights(&m, Some(&cfg));
    let path = fixture("xor_mlp.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &text).unwrap();
    }
    let golden = fs::read_to_string(&path).expect("golden file; regenerate with UPDATE_GOLDEN=1");
    assert_eq!(text, golden);
    assert_eq!(import_weights(&golden).unwrap(), m);
}

fn scaled(x: &Array2<f64>, s: f64) -> Array2<f64> {
    x * s
}

#[test]
fn hard_margin_svm_ignores_feature_scale() {
    let cfg = SvmConfig {
        c: 1e6,
        ..SvmConfig::new(0)
    };
    for seed in 0..5 {
        let (x, y) = gen_separable_blobs(40, 1.0, seed).unwrap();
        let base = train_linear_svm(x.view(), &y, &cfg).unwrap();
        for s in [0.5, 3.0, 10.0] {
            let xs = scaled(&x, s);
            let m = train_linear_svm(xs.view(), &y, &cfg).unwrap();
            for (a, b) in base.weights.iter().zip(&m.weights) {
                assert!(
                    (a - b * s).abs() < 1e-3 * a.abs().max(1.0),
                    "{a} vs {}",
                    b * s
                );
            }
            assert!((base.bias - m.bias).abs() < 1e-3 * base.bias.abs().max(1.0));
            for (row, &t) in xs.axis_iter(Axis(0)).zip(&y) {
                let p = predict_linear(&m, row.as_slice().unwrap()).unwrap();
                assert_eq!(f64::from(p), t);
            }
        }
    }
}

/// Orders agree, or differ by a single swap of neighbours.
fn near_equal(a: &[usize], b: &[usize]) -> bool {
    let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    match diff.as_slice() {
        [] => true,
        [i, j] => *j == i + 1 && a[*i] == b[*j] && a[*j] == b[*i],
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dropping_the_last_ranked_attribute_keeps_the_order(seed in 0u64..10_000) {
        let (x, y) = gen_linear(&LinearSpec {
            n: 60,
            d_informative: 3,
            d_noise: 5,
            separation: 1.5,
            seed,
        })
        .unwrap();
        let cfg = SvmConfig::new(0);
        let full = rfe_rank(x.view(), &y, &cfg).unwrap();
        let last = *full.order.last().unwrap();
        let kept: Vec<usize> = (0..x.ncols()).filter(|&j| j != last).collect();
        let reduced = x.select(Axis(1), &kept);
        let again = rfe_rank(reduced.view(), &y, &cfg).unwrap();
        let mapped: Vec<usize> = again.order.iter().map(|&j| kept[j]).collect();
        let prefix = &full.order[..full.order.len() - 1];
        prop_assert!(near_equal(prefix, &mapped), "{prefix:?} vs {mapped:?}");
    }
}
