//! End-to-end experiment runner: walk, prepare, train, evaluate, ablate.

use serde::{Deserialize, Serialize};

use crate::config::{GnnVariant, TrainConfig};
use crate::error::{AmrError, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::features::build_all_features;
use crate::graph::Dataset;
use crate::model::{forward_values, ModelData, Scorer};
use crate::params::ParamStore;
use crate::paths::{biwalk, PathSet, WalkStats};
use crate::trainer::{train, TrainHistory};

/// Discover both pathsets and assemble model inputs for a dataset.
pub fn prepare_model(
    cfg: &TrainConfig,
    dataset: &Dataset,
) -> Result<(ModelData, PathSet, WalkStats, PathSet, WalkStats)> {
    let learner_ty = dataset
        .graph
        .type_index("learner")
        .ok_or_else(|| AmrError::Schema("dataset has no 'learner' type".into()))?;
    let kc_ty = dataset
        .graph
        .type_index("KC")
        .ok_or_else(|| AmrError::Schema("dataset has no 'KC' type".into()))?;
    let (ll, ll_stats) = biwalk(
        &dataset.graph,
        learner_ty,
        cfg.max_path_len,
        Some(cfg.paths_per_pair),
    )?;
    let (kk, kk_stats) = biwalk(
        &dataset.graph,
        kc_ty,
        cfg.max_path_len,
        Some(cfg.paths_per_pair),
    )?;
    let data = prepare_model_with_paths(cfg, dataset, &ll, &kk)?;
    Ok((data, ll, ll_stats, kk, kk_stats))
}

/// Assemble model inputs from already-discovered pathsets.
pub fn prepare_model_with_paths(
    cfg: &TrainConfig,
    dataset: &Dataset,
    ll: &PathSet,
    kk: &PathSet,
) -> Result<ModelData> {
    let learner_ty = dataset
        .graph
        .type_index("learner")
        .ok_or_else(|| AmrError::Schema("dataset has no 'learner' type".into()))?;
    let kc_ty = dataset
        .graph
        .type_index("KC")
        .ok_or_else(|| AmrError::Schema("dataset has no 'KC' type".into()))?;
    let features = build_all_features(dataset)?;
    ModelData::prepare(
        cfg,
        learner_ty,
        kc_ty,
        dataset.graph.node_count(learner_ty) as usize,
        dataset.graph.node_count(kc_ty) as usize,
        ll,
        kk,
        features,
    )
}

/// Evaluate trained parameters on the dataset's test positives.
pub fn evaluate_store(
    cfg: &TrainConfig,
    data: &ModelData,
    store: &ParamStore,
    dataset: &Dataset,
) -> Result<MetricsReport> {
    let positives: Vec<(u32, u32)> = dataset
        .interactions
        .test()
        .map(|r| (r.learner, r.kc))
        .collect();
    if positives.is_empty() {
        return Err(AmrError::Contract("no test interactions to evaluate".into()));
    }
    let observed = dataset
        .interactions
        .observed_by_learner(data.n_learners as u32);
    let values = forward_values(store, data)?;
    let scorer = Scorer {
        store,
        cfg,
        values: &values,
    };
    evaluate(
        &scorer,
        &positives,
        &observed,
        data.n_kcs as u32,
        cfg.eval_negatives,
        cfg.seed,
    )
}

pub struct PipelineOutput {
    pub data: ModelData,
    pub store: ParamStore,
    pub history: TrainHistory,
    pub report: MetricsReport,
    pub ll_stats: WalkStats,
    pub kk_stats: WalkStats,
}

/// Walk, train, and evaluate in one call.
pub fn run_pipeline(cfg: &TrainConfig, dataset: &Dataset) -> Result<PipelineOutput> {
    let (data, _, ll_stats, _, kk_stats) = prepare_model(cfg, dataset)?;
    let (store, history) = train(cfg, &data, &dataset.interactions)?;
    let report = evaluate_store(cfg, &data, &store, dataset)?;
    Ok(PipelineOutput {
        data,
        store,
        history,
        report,
        ll_stats,
        kk_stats,
    })
}

/// Ablation axis over which [`run_ablation`] scans.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AblationAxis {
    Aspects,
    PathLength,
    GnnVariant,
}

impl std::str::FromStr for AblationAxis {
    type Err = AmrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aspects" => Ok(AblationAxis::Aspects),
            "path_length" => Ok(AblationAxis::PathLength),
            "gnn_variant" => Ok(AblationAxis::GnnVariant),
            other => Err(AmrError::Schema(format!(
                "ablation axis must be aspects|path_length|gnn_variant, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AblationAxis::Aspects => write!(f, "aspects"),
            AblationAxis::PathLength => write!(f, "path_length"),
            AblationAxis::GnnVariant => write!(f, "gnn_variant"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub value: String,
    pub report: MetricsReport,
}

/// Train and evaluate once per axis value with a shared seed.
pub fn run_ablation(
    axis: AblationAxis,
    values: &[String],
    base: &TrainConfig,
    dataset: &Dataset,
) -> Result<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(AmrError::Contract("ablation over no values".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        match axis {
            AblationAxis::Aspects => {
                cfg.aspects = value.parse().map_err(|_| {
                    AmrError::Schema(format!("bad aspect count '{value}'"))
                })?;
            }
            AblationAxis::PathLength => {
                cfg.max_path_len = value.parse().map_err(|_| {
                    AmrError::Schema(format!("bad path length '{value}'"))
                })?;
            }
            AblationAxis::GnnVariant => {
                cfg.gnn_variant = value.parse()?;
            }
        }
        cfg.validate()?;
        let out = run_pipeline(&cfg, dataset)?;
        rows.push(AblationRow {
            axis: axis.to_string(),
            value: value.clone(),
            report: out.report,
        });
    }
    Ok(rows)
}

/// Ablation table as CSV with a config-hash header.
pub fn ablation_csv(rows: &[AblationRow], base: &TrainConfig) -> String {
    let mut out = format!("# base_config_hash: {}\n", base.hash());
    out.push_str("axis,value,hr5,hr10,hr20,ndcg5,ndcg10,ndcg20,groups,skipped\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.axis,
            r.value,
            r.report.hr5,
            r.report.hr10,
            r.report.hr20,
            r.report.ndcg5,
            r.report.ndcg10,
            r.report.ndcg20,
            r.report.groups,
            r.report.skipped
        ));
    }
    out
}

/// All GNN variants, for variant scans.
pub fn all_variants() -> [GnnVariant; 3] {
    [GnnVariant::Gcn, GnnVariant::Gat, GnnVariant::Sage]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{toy_config, toy_dataset};

    #[test]
    fn pipeline_runs_on_toy_dataset() {
        let cfg = TrainConfig {
            epochs: 2,
            val_fraction: 0.25,
            ..toy_config()
        };
        let ds = toy_dataset();
        let out = run_pipeline(&cfg, &ds).unwrap();
        assert_eq!(out.report.groups, 5);
        assert!(out.report.hr5 >= 0.0 && out.report.hr5 <= 1.0);
        assert!(out.history.epochs.len() <= 2);
        assert!(out.ll_stats.pairs > 0);
        assert!(out.kk_stats.pairs > 0);
    }

    #[test]
    fn ablation_emits_one_row_per_value() {
        let cfg = TrainConfig {
            epochs: 1,
            val_fraction: 0.25,
            ..toy_config()
        };
        let ds = toy_dataset();
        let values: Vec<String> = ["2", "3"].iter().map(|s| s.to_string()).collect();
        let rows = run_ablation(AblationAxis::Aspects, &values, &cfg, &ds).unwrap();
        assert_eq!(rows.len(), 2);
        let csv = ablation_csv(&rows, &cfg);
        assert_eq!(csv.lines().count(), 2 + rows.len());
        assert!(csv.starts_with("# base_config_hash: "));
    }

    #[test]
    fn gnn_variant_ablation_runs_all_three() {
        let cfg = TrainConfig {
            epochs: 1,
            val_fraction: 0.25,
            ..toy_config()
        };
        let ds = toy_dataset();
        let values: Vec<String> = all_variants().iter().map(|v| v.to_string()).collect();
        let rows = run_ablation(AblationAxis::GnnVariant, &values, &cfg, &ds).unwrap();
        assert_eq!(rows.len(), 3);
    }
}
