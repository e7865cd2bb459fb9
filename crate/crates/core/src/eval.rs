//! Full-catalog ranking metrics: hit rate and nDCG at several cutoffs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{add_master_node, GlobalTemporalGraph, TrajectoryGraph};
use crate::gsan::Gsan;
use crate::ingest::{Catalog, Sample};
use crate::numerics::ParamSet;

pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 20];

/// 1-based rank of `target`. Ties are broken in favour of lower indices,
/// which is ascending POI id order.
pub fn rank_target(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < target))
        .count();
    1 + ahead
}

fn nonempty(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Data("no ranks to aggregate".into()));
    }
    Ok(())
}

pub fn hit_rate(ranks: &[usize], k: usize) -> Result<f64> {
    nonempty(ranks)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Single-relevant-item nDCG: `1/log2(rank + 1)` inside the cutoff.
pub fn ndcg(ranks: &[usize], k: usize) -> Result<f64> {
    nonempty(ranks)?;
    let gain: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / (r as f64 + 1.0).log2())
        .sum();
    Ok(gain / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub samples: usize,
    pub metrics: Vec<CutoffMetrics>,
}

impl MetricsReport {
    pub fn from_ranks(split: &str, ranks: &[usize], ks: &[usize]) -> Result<Self> {
        let metrics = ks
            .iter()
            .map(|&k| {
                Ok(CutoffMetrics {
                    k,
                    hr: hit_rate(ranks, k)?,
                    ndcg: ndcg(ranks, k)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            split: split.to_string(),
            samples: ranks.len(),
            metrics,
        })
    }

    pub fn at(&self, k: usize) -> Option<&CutoffMetrics> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{} ({} samples)\n", self.split, self.samples);
        let _ = writeln!(out, "{:>6}  {:>8}  {:>8}", "K", "HR", "nDCG");
        for m in &self.metrics {
            let _ = writeln!(out, "{:>6}  {:>8.4}  {:>8.4}", m.k, m.hr, m.ndcg);
        }
        out
    }
}

/// Ranks each sample's target against the whole catalog, encoding the
/// prefix graph without augmentation.
pub fn rank_samples(
    model: &Gsan,
    params: &ParamSet,
    catalog: &Catalog,
    gt: &GlobalTemporalGraph,
    samples: &[Sample],
) -> Result<Vec<usize>> {
    samples
        .par_iter()
        .map(|s| {
            if s.prefix.is_empty() {
                return Err(Error::Data("evaluation prefix is empty".into()));
            }
            let g = TrajectoryGraph::from_sequence(&s.prefix, catalog);
            let mg = add_master_node(g, catalog, model.config.spd_cap);
            let inputs = model.prepare(&mg, gt)?;
            let scores = model.score(params, &inputs)?;
            Ok(rank_target(&scores, s.target.index()))
        })
        .collect()
}

pub fn evaluate(
    split: &str,
    model: &Gsan,
    params: &ParamSet,
    catalog: &Catalog,
    gt: &GlobalTemporalGraph,
    samples: &[Sample],
    ks: &[usize],
) -> Result<MetricsReport> {
    let ranks = rank_samples(model, params, catalog, gt, samples)?;
    MetricsReport::from_ranks(split, &ranks, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng as _, SeedableRng};

    #[test]
    fn rank_examples() {
        let mut s = vec![0.1; 100];
        s[42] = 0.9;
        assert_eq!(rank_target(&s, 42), 1);
        assert_eq!(rank_target(&vec![0.5; 100], 36), 37);
        let mut s = vec![0.5; 100];
        s[7] = 0.0;
        assert_eq!(rank_target(&s, 7), 100);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(hit_rate(&[1, 1, 1], 5).unwrap(), 1.0);
        assert_eq!(ndcg(&[1, 1], 1).unwrap(), 1.0);
        assert_eq!(hit_rate(&[3], 10).unwrap(), 1.0);
        assert_eq!(ndcg(&[3], 10).unwrap(), 0.5);
        assert_eq!(hit_rate(&[11], 10).unwrap(), 0.0);
        assert_eq!(ndcg(&[11], 10).unwrap(), 0.0);
        assert!(hit_rate(&[], 1).is_err());
        assert!(ndcg(&[], 1).is_err());
    }

    #[test]
    fn report_table_lists_each_cutoff() {
        let r = MetricsReport::from_ranks("test", &[1, 3, 30], &DEFAULT_KS).unwrap();
        assert_eq!(r.at(10).unwrap().hr, 2.0 / 3.0);
        let table = r.table();
        assert_eq!(table.lines().count(), 2 + DEFAULT_KS.len());
        assert!(table.contains("test (3 samples)"));
    }

    proptest! {
        #[test]
        fn metrics_monotone_and_bounded(ranks in prop::collection::vec(1usize..200, 1..50)) {
            let mut prev = (0.0, 0.0);
            for k in 1..60 {
                let (h, n) = (hit_rate(&ranks, k).unwrap(), ndcg(&ranks, k).unwrap());
                prop_assert!(h >= prev.0 && n >= prev.1);
                prop_assert!(n <= h + 1e-15 && (0.0..=1.0).contains(&h));
                prev = (h, n);
            }
        }

        #[test]
        fn rank_consistent_under_permutation(seed in 0u64..1000, ties in any::<bool>()) {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let scores: Vec<f64> = (0..n).map(|_| if ties { r.gen_range(0..4) as f64 } else { r.gen() }).collect();
            let target = r.gen_range(0..n);
            // shuffle (id, score) pairs and rank by score then id, with the
            // ids carried along instead of implied by position
            let mut pairs: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
            pairs.shuffle(&mut r);
            let t = scores[target];
            let permuted = 1 + pairs.iter().filter(|&&(id, s)| s > t || (s == t && id < target)).count();
            prop_assert_eq!(rank_target(&scores, target), permuted);
            let brute = 1 + scores.iter().enumerate().filter(|&(i, &s)| s > scores[target] || (s == scores[target] && i < target)).count();
            prop_assert_eq!(rank_target(&scores, target), brute);
        }
    }
}
