//! Recursive feature elimination with a linear SVM: retrain on the surviving
//! attributes, drop the one with the smallest squared weight, repeat.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{solve_dual, LearnError, SvmConfig};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("ranking needs at least 2 attributes, got {0}")]
    TooFewAttributes(usize),
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("SVM training failed at elimination {iteration}: {source}")]
    Train {
        iteration: usize,
        #[source]
        source: LearnError,
    },
    #[error("ranking has {ranking} attributes but {names} names were given")]
    NameCount { ranking: usize, names: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub iteration: usize,
    pub removed: usize,
    pub criterion: f64,
}

/// `order[0]` is the last surviving (most important) attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<usize>,
    pub trace: Vec<Elimination>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Named form for serialization.
    pub fn named(&self, names: &[String], seed: Option<u64>) -> Result<NamedRanking, RankError> {
        if names.len() != self.order.len() {
            return Err(RankError::NameCount {
                ranking: self.order.len(),
                names: names.len(),
            });
        }
        Ok(NamedRanking {
            seed,
            order: self.order.iter().map(|&i| names[i].clone()).collect(),
            trace: self
                .trace
                .iter()
                .map(|e| NamedElimination {
                    iteration: e.iteration,
                    removed: names[e.removed].clone(),
                    criterion: e.criterion,
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedElimination {
    pub iteration: usize,
    pub removed: String,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRanking {
    pub seed: Option<u64>,
    pub order: Vec<String>,
    pub trace: Vec<NamedElimination>,
}

impl NamedRanking {
    /// Two-column listing of the head and tail of the ranking.
    pub fn summary_table(&self, k_top: usize, k_bottom: usize) -> String {
        let top: Vec<&str> = self.order.iter().take(k_top).map(String::as_str).collect();
        let bottom: Vec<&str> = self
            .order
            .iter()
            .rev()
            .take(k_bottom)
            .map(String::as_str)
            .collect();
        let width = top
            .iter()
            .map(|s| s.len())
            .max()
            .unwrap_or(0)
            .max(3 + k_top.to_string().len() + 1);
        let head = format!("top {k_top}");
        let mut out = format!("{head:<width$}  bottom {k_bottom}\n");
        for i in 0..top.len().max(bottom.len()) {
            let line = format!(
                "{:<width$}  {}",
                top.get(i).copied().unwrap_or(""),
                bottom.get(i).copied().unwrap_or("")
            );
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Ranks the columns of a complete, standardized matrix; `y` in {−1, +1}.
pub fn rfe_rank(x: ArrayView2<'_, f64>, y: &[f64], cfg: &SvmConfig) -> Result<Ranking, RankError> {
    let d = x.ncols();
    if d < 2 {
        return Err(RankError::TooFewAttributes(d));
    }
    let train_err = |source| RankError::Train {
        iteration: 0,
        source,
    };
    cfg.validate().map_err(train_err)?;
    crate::learners::check_binary_labels(x, y, -1.0, 1.0).map_err(train_err)?;

    // The linear kernel over surviving columns, downdated as columns go.
    let mut gram = x.dot(&x.t());
    let mut alive: Vec<usize> = (0..d).collect();
    let mut trace = Vec::with_capacity(d - 1);
    for iteration in 0..d - 1 {
        let sol = solve_dual(gram.view(), y, cfg);
        let coef: Vec<f64> = sol.alpha.iter().zip(y).map(|(a, yi)| a * yi).collect();
        let mut best = (f64::INFINITY, 0);
        for (pos, &f) in alive.iter().enumerate() {
            let w: f64 = x.column(f).iter().zip(&coef).map(|(v, c)| v * c).sum();
            if w * w < best.0 {
                best = (w * w, pos);
            }
        }
        let removed = alive.remove(best.1);
        let col = x.column(removed);
        let col2 = col.view().insert_axis(Axis(1));
        gram -= &col2.dot(&col2.t());
        trace.push(Elimination {
            iteration,
            removed,
            criterion: best.0,
        });
    }
    let mut order = alive;
    order.extend(trace.iter().rev().map(|e| e.removed));
    Ok(Ranking { order, trace })
}

fn check_k(r: &Ranking, k: usize) -> Result<(), RankError> {
    if k == 0 || k > r.len() {
        return Err(RankError::KOutOfRange { k, n: r.len() });
    }
    Ok(())
}

pub fn top_k(r: &Ranking, k: usize) -> Result<Vec<usize>, RankError> {
    check_k(r, k)?;
    Ok(r.order[..k].to_vec())
}

/// The `k` lowest-ranked attributes, least important first.
pub fn bottom_k(r: &Ranking, k: usize) -> Result<Vec<usize>, RankError> {
    check_k(r, k)?;
    Ok(r.order.iter().rev().take(k).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn planted(seed: u64, n: usize, d: usize, duplicate: bool) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        for i in 0..n {
            x[[i, 0]] = y[i];
            if duplicate {
                x[[i, 1]] = y[i];
            }
        }
        (x, y)
    }

    #[test]
    fn exact_signal_ranks_first() {
        let (x, y) = planted(3, 200, 10, false);
        let r = rfe_rank(x.view(), &y, &SvmConfig::new(3)).unwrap();
        assert_eq!(r.order[0], 0);
        assert_eq!(r.trace.len(), 9);
    }

    #[test]
    fn duplicated_signal_takes_top_two() {
        let (x, y) = planted(5, 100, 6, true);
        let r = rfe_rank(x.view(), &y, &SvmConfig::new(5)).unwrap();
        let mut head = top_k(&r, 2).unwrap();
        head.sort();
        assert_eq!(head, vec![0, 1]);
    }

    #[test]
    fn two_attributes_one_elimination() {
        let (x, y) = planted(1, 20, 2, false);
        let r = rfe_rank(x.view(), &y, &SvmConfig::new(1)).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.order, vec![0, 1]);
    }

    #[test]
    fn too_few_attributes_and_bad_k() {
        let (x, y) = planted(1, 20, 1, false);
        assert!(matches!(
            rfe_rank(x.view(), &y, &SvmConfig::new(1)),
            Err(RankError::TooFewAttributes(1))
        ));
        let r = Ranking {
            order: vec![2, 0, 1],
            trace: vec![],
        };
        assert!(top_k(&r, 0).is_err());
        assert!(bottom_k(&r, 4).is_err());
        assert_eq!(top_k(&r, 3).unwrap(), vec![2, 0, 1]);
        assert_eq!(top_k(&r, 1).unwrap(), vec![2]);
        assert_eq!(bottom_k(&r, 3).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn single_class_reports_iteration() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let err = rfe_rank(x.view(), &[1.0; 4], &SvmConfig::new(0)).unwrap_err();
        assert!(matches!(
            err,
            RankError::Train {
                iteration: 0,
                source: LearnError::SingleClass
            }
        ));
    }

    #[test]
    fn summary_table_layout() {
        let named = NamedRanking {
            seed: Some(1),
            order: ["a", "bb", "c", "d"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            trace: vec![],
        };
        assert_eq!(named.summary_table(2, 1), "top 2  bottom 1\na      d\nbb\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ranking_is_a_permutation(seed in 0u64..1000, d in 2usize..7, n in 6usize..30) {
            let (x, y) = planted(seed, n, d, false);
            let mut x = x;
            // weaken the planted column so eliminations vary
            x.column_mut(0).mapv_inplace(|v| v * 0.1);
            let r = rfe_rank(x.view(), &y, &SvmConfig::new(seed)).unwrap();
            let mut sorted = r.order.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..d).collect::<Vec<_>>());
            prop_assert_eq!(r.trace.len(), d - 1);
            for k in 1..d {
                let mut all = top_k(&r, d - k).unwrap();
                all.extend(bottom_k(&r, k).unwrap());
                all.sort();
                prop_assert_eq!(all, (0..d).collect::<Vec<_>>());
            }
            prop_assert_eq!(rfe_rank(x.view(), &y, &SvmConfig::new(seed)).unwrap(), r);
        }
    }
}
