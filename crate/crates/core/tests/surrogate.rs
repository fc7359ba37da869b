use std::collections::BTreeSet;
use std::path::Path;

use selsurv::ensemble::Subset;
use selsurv::pipeline::{evaluate, prepare_cohort, rank_cohort, Cohort, RunConfig};
use selsurv::preprocess::{apply_imputation, fit_imputation, fit_linearization};
use selsurv::synth::{gen_clinical_surrogate, Surrogate, SurrogateSpec};

fn config(seed: u64) -> RunConfig {
    let text =
        format!(r#"{{"seed": {seed}, "dataset": "d.csv", "schema": "s.json", "out": "out"}}"#);
    RunConfig::from_json(&text, Path::new(".")).unwrap()
}

fn cohort(spec: &SurrogateSpec) -> (Surrogate, Cohort, RunConfig) {
    let sur = gen_clinical_surrogate(spec).unwrap();
    let cfg = config(spec.seed);
    let c = prepare_cohort(&sur.dataset, &cfg).unwrap();
    (sur, c, cfg)
}

fn set(v: &[String]) -> BTreeSet<String> {
    v.iter().cloned().collect()
}

#[test]
fn large_cohort_ranks_planted_signal_first() {
    let mut spec = SurrogateSpec::new(11);
    spec.n_patients = 1200;
    let (sur, c, cfg) = cohort(&spec);
    let r = rank_cohort(&c, &cfg).unwrap();
    assert_eq!(set(&r.order[..8]), set(&sur.truth.signal), "{:?}", r.order);
}

#[test]
fn default_cohort_ranking_layout() {
    let (sur, c, cfg) = cohort(&SurrogateSpec::new(11));
    let r = rank_cohort(&c, &cfg).unwrap();
    let signal = set(&sur.truth.signal);
    let top = r.order[..8].iter().filter(|a| signal.contains(*a)).count();
    assert!(top >= 6, "{:?}", r.order);
    let weak: BTreeSet<String> = set(&sur.truth.antisignal)
        .union(&set(&sur.truth.noise))
        .cloned()
        .collect();
    let bottom = &r.order[r.order.len() - 6..];
    assert!(bottom.iter().all(|a| weak.contains(a)), "{bottom:?}");
    // the role-flagged attributes never reach the ranking
    for a in &sur.truth.role_flagged {
        assert!(!r.order.contains(a));
    }
}

#[test]
fn flipl_merges_its_extreme_levels() {
    let mut spec = SurrogateSpec::new(11);
    spec.n_patients = 1200;
    let (_, c, _) = cohort(&spec);
    let map = fit_linearization(&c.dataset, &c.labels).unwrap();
    let e = map.entries.iter().find(|e| e.attribute == "flipl").unwrap();
    let got: Vec<(u32, u8)> = e.mapping.iter().map(|(&l, &g)| (l, g)).collect();
    assert_eq!(got, vec![(0, 0), (1, 1), (2, 1), (3, 0)]);
}

#[test]
fn evaluation_fills_every_subset_and_linearization_helps() {
    let (_, c, cfg) = cohort(&SurrogateSpec::new(11));
    let ev = evaluate(&c, &cfg).unwrap();
    assert_eq!(ev.report.rows.len(), 7);
    for s in Subset::ALL {
        let row = ev.report.row(s).unwrap();
        assert!(row.n_patients > 0, "{s:?} is empty");
    }
    let at = |lin: bool| {
        ev.sweep
            .iter()
            .find(|p| p.k == 8 && p.linearized == lin)
            .unwrap()
            .accuracy
    };
    assert!(at(true) >= at(false), "{} < {}", at(true), at(false));
}

#[test]
fn zero_missing_rate_leaves_no_gaps() {
    let mut spec = SurrogateSpec::new(3);
    spec.missing_rate = 0.0;
    let sur = gen_clinical_surrogate(&spec).unwrap();
    assert_eq!(sur.dataset.missing_count(), 0);
}

#[test]
fn imputation_fills_the_whole_surrogate() {
    let sur = gen_clinical_surrogate(&SurrogateSpec::new(11)).unwrap();
    assert!(sur.dataset.missing_count() > 0);
    let plan = fit_imputation(&sur.dataset).unwrap();
    let filled = apply_imputation(&sur.dataset, &plan).unwrap();
    assert_eq!(filled.missing_count(), 0);
}

#[test]
fn wide_surrogate_hits_its_missing_rate() {
    let mut spec = SurrogateSpec::new(4);
    spec.n_patients = 462;
    spec.n_noise = 200 - 8 - 6 - 3;
    let sur = gen_clinical_surrogate(&spec).unwrap();
    let ds = &sur.dataset;
    assert_eq!((ds.n_patients(), ds.n_attributes()), (462, 200));
    assert!((ds.missing_fraction() - 0.10).abs() <= 0.005);
}
