//! Ranked-retrieval evaluation: 1-positive-plus-N-negatives groups, HR@K and
//! nDCG@K, and the analysis exporters.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};
use crate::graph::NodeRef;
use crate::model::{ForwardValues, Scorer};
use crate::paths::{PathSet, WalkStats};

/// One evaluation group: a positive KC ranked against sampled negatives.
#[derive(Clone, Debug)]
pub struct RankedGroup {
    pub learner: u32,
    pub positive: u32,
    /// Positive first, then negatives; order carries no meaning.
    pub candidates: Vec<u32>,
    pub scores: Vec<f64>,
    /// 1-based rank of the positive under descending score, ties broken by
    /// ascending KC id.
    pub rank_of_positive: usize,
}

impl RankedGroup {
    pub fn new(learner: u32, positive: u32, candidates: Vec<u32>, scores: Vec<f64>) -> Self {
        assert_eq!(candidates.len(), scores.len());
        assert_eq!(candidates[0], positive, "positive must be candidate 0");
        assert!(scores.iter().all(|s| s.is_finite()), "scores must be finite");
        let pos_score = scores[0];
        let rank = 1 + candidates
            .iter()
            .zip(&scores)
            .skip(1)
            .filter(|&(&c, &s)| s > pos_score || (s == pos_score && c < positive))
            .count();
        Self {
            learner,
            positive,
            candidates,
            scores,
            rank_of_positive: rank,
        }
    }

    /// Candidate indices sorted by the ranking rule.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.sort_by(|&i, &j| {
            self.scores[j]
                .partial_cmp(&self.scores[i])
                .unwrap()
                .then(self.candidates[i].cmp(&self.candidates[j]))
        });
        idx
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub config_hash: String,
    pub groups: usize,
    pub skipped: usize,
    pub hr5: f64,
    pub hr10: f64,
    pub hr20: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
}

fn check_k(k: usize) -> Result<()> {
    if matches!(k, 5 | 10 | 20) {
        Ok(())
    } else {
        Err(AmrError::Contract(format!("k must be 5, 10 or 20, got {k}")))
    }
}

/// Fraction of groups whose positive lands in the top k.
pub fn hr_at_k(groups: &[RankedGroup], k: usize) -> Result<f64> {
    check_k(k)?;
    if groups.is_empty() {
        return Err(AmrError::Contract("hr_at_k over no groups".into()));
    }
    let hits = groups.iter().filter(|g| g.rank_of_positive <= k).count();
    Ok(hits as f64 / groups.len() as f64)
}

/// Mean of `1/log2(rank+1)` for positives in the top k; the single relevant
/// item makes the ideal-DCG normalizer exactly 1.
pub fn ndcg_at_k(groups: &[RankedGroup], k: usize) -> Result<f64> {
    check_k(k)?;
    if groups.is_empty() {
        return Err(AmrError::Contract("ndcg_at_k over no groups".into()));
    }
    let total: f64 = groups
        .iter()
        .map(|g| {
            if g.rank_of_positive <= k {
                1.0 / ((g.rank_of_positive + 1) as f64).log2()
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / groups.len() as f64)
}

pub fn metrics_from_groups(
    groups: &[RankedGroup],
    skipped: usize,
    config_hash: &str,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        config_hash: config_hash.to_string(),
        groups: groups.len(),
        skipped,
        hr5: hr_at_k(groups, 5)?,
        hr10: hr_at_k(groups, 10)?,
        hr20: hr_at_k(groups, 20)?,
        ndcg5: ndcg_at_k(groups, 5)?,
        ndcg10: ndcg_at_k(groups, 10)?,
        ndcg20: ndcg_at_k(groups, 20)?,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Stable per-(learner, positive) seed for negative sampling.
pub fn group_seed(seed: u64, learner: u32, kc: u32) -> u64 {
    splitmix64(seed ^ splitmix64(((learner as u64) << 32) | kc as u64))
}

/// Draw `n` distinct KCs the learner has not observed, deterministically per
/// (seed, learner, positive). Returns None when the pool is too small.
fn sample_group_negatives(
    n_kcs: u32,
    observed: &BTreeSet<u32>,
    n: usize,
    seed: u64,
) -> Option<Vec<u32>> {
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;
    let candidates: Vec<u32> = (0..n_kcs).filter(|k| !observed.contains(k)).collect();
    if candidates.len() < n {
        return None;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picked = candidates;
    picked.shuffle(&mut rng);
    picked.truncate(n);
    Some(picked)
}

/// Build one ranked group per test positive. Groups whose learner lacks
/// enough unobserved negatives are skipped and counted.
pub fn build_groups<F>(
    score_fn: F,
    positives: &[(u32, u32)],
    observed: &[BTreeSet<u32>],
    n_kcs: u32,
    n_neg: usize,
    seed: u64,
) -> (Vec<RankedGroup>, usize)
where
    F: Fn(u32, &[u32]) -> Vec<f64> + Sync,
{
    let results: Vec<Option<RankedGroup>> = positives
        .par_iter()
        .map(|&(learner, positive)| {
            let negs = sample_group_negatives(
                n_kcs,
                &observed[learner as usize],
                n_neg,
                group_seed(seed, learner, positive),
            )?;
            let mut candidates = Vec::with_capacity(1 + negs.len());
            candidates.push(positive);
            candidates.extend(negs);
            let scores = score_fn(learner, &candidates);
            Some(RankedGroup::new(learner, positive, candidates, scores))
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), skipped)
}

/// Evaluate a trained model on test positives: one group per positive with
/// seeded negative sampling, then all six metrics.
pub fn evaluate(
    scorer: &Scorer,
    positives: &[(u32, u32)],
    observed: &[BTreeSet<u32>],
    n_kcs: u32,
    n_neg: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let (groups, skipped) = build_groups(
        |l, ks| scorer.score_candidates(l, ks),
        positives,
        observed,
        n_kcs,
        n_neg,
        seed,
    );
    if groups.is_empty() {
        return Err(AmrError::Contract(
            "evaluation produced no ranked groups".into(),
        ));
    }
    metrics_from_groups(&groups, skipped, &scorer.cfg.hash())
}

/// Per-aspect mean importance over sampled pairs plus path-count companion
/// statistics, as CSV.
pub fn export_aspect_importance(
    scorer: &Scorer,
    sample_pairs: &[(u32, u32)],
    ll_stats: &WalkStats,
    kk_stats: &WalkStats,
) -> Result<String> {
    if sample_pairs.is_empty() {
        return Err(AmrError::Contract("no pairs sampled for export".into()));
    }
    let a = scorer.cfg.aspects;
    let mut mean_l = vec![0.0; a];
    let mut mean_k = vec![0.0; a];
    let mut rows = String::new();
    for &(l, k) in sample_pairs {
        let (bl, bk) = scorer.pair_betas(l, k);
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        rows.push_str(&format!("{l},{k},{},{}\n", fmt(&bl), fmt(&bk)));
        for i in 0..a {
            mean_l[i] += bl[i] / sample_pairs.len() as f64;
            mean_k[i] += bk[i] / sample_pairs.len() as f64;
        }
    }
    let mut out = format!("# config_hash: {}\n", scorer.cfg.hash());
    out.push_str(&format!(
        "# mean_paths_per_endpoint: learner={} kc={}\n",
        ll_stats.mean_paths_per_endpoint, kk_stats.mean_paths_per_endpoint
    ));
    let header_l: Vec<String> = (0..a).map(|i| format!("beta_l_{i}")).collect();
    let header_k: Vec<String> = (0..a).map(|i| format!("beta_k_{i}")).collect();
    out.push_str(&format!(
        "learner,kc,{},{}\n",
        header_l.join(","),
        header_k.join(",")
    ));
    out.push_str(&rows);
    let fmt_mean = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    out.push_str(&format!("mean,,{},{}\n", fmt_mean(&mean_l), fmt_mean(&mean_k)));
    Ok(out)
}

/// Cosine distance; zero-norm vectors are at distance 1 from anything except
/// another zero vector.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        0.0
    } else if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

/// Edge features of pairs sharing one metapath type signature, one row per
/// pair, with a pairwise cosine-distance diversity summary.
pub fn export_edge_feature_heatmap(
    values: &ForwardValues,
    pathset: &PathSet,
    graph: &crate::graph::HeteroGraph,
    signature: &[u16],
    config_hash: &str,
) -> Result<String> {
    let (pairs, feats) = if pathset.endpoint_ty == values.ll_pairs.first().map(|p| p.0.ty).unwrap_or(u16::MAX)
    {
        (&values.ll_pairs, &values.ll_edge_feats)
    } else {
        (&values.kk_pairs, &values.kk_edge_feats)
    };

    let matches_sig = |a: &NodeRef, b: &NodeRef| {
        pathset
            .paths_canonical(*a, *b)
            .iter()
            .any(|p| p.type_signature() == signature)
    };
    let selected: Vec<(usize, &(NodeRef, NodeRef))> = pairs
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| matches_sig(a, b))
        .collect();
    if selected.len() < 2 {
        return Err(AmrError::Contract(format!(
            "need at least 2 pairs sharing the signature, found {}",
            selected.len()
        )));
    }

    let sig_names: Vec<&str> = signature.iter().map(|&t| graph.type_name(t)).collect();
    let mut out = format!("# config_hash: {config_hash}\n");
    out.push_str(&format!("# signature: {}\n", sig_names.join("-")));
    let width = feats[selected[0].0].len();
    let dims: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    out.push_str(&format!("pair_a,pair_b,{}\n", dims.join(",")));
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, (a, b)) in &selected {
        let f: Vec<f64> = feats[*idx].iter().cloned().collect();
        let vals: Vec<String> = f.iter().map(|x| format!("{x}")).collect();
        out.push_str(&format!(
            "{}:{},{}:{},{}\n",
            graph.type_name(a.ty),
            a.id,
            graph.type_name(b.ty),
            b.id,
            vals.join(",")
        ));
        rows.push(f);
    }
    let mut dists = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            dists.push(cosine_distance(&rows[i], &rows[j]));
        }
    }
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.push_str(&format!(
        "# cosine_distance mean={mean} min={min} max={max} pairs={}\n",
        dists.len()
    ));
    Ok(out)
}
