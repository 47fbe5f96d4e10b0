//! Small deterministic fixtures shared by unit tests, the gradient checker,
//! and the benchmark suite.

use crate::config::TrainConfig;
use crate::error::Result;
use crate::features::build_all_features;
use crate::graph::{Dataset, HeteroGraph, Interaction, InteractionLog, Split};
use crate::model::ModelData;
use crate::paths::biwalk;

/// 5 learners, 3 videos, 2 courses, 8 KCs with enough connectivity for
/// learner-learner and KC-KC paths at L_max = 3.
pub fn toy_dataset() -> Dataset {
    let mut graph = HeteroGraph::new(&[
        ("KC".into(), 8),
        ("course".into(), 2),
        ("learner".into(), 5),
        ("video".into(), 3),
    ])
    .unwrap();
    let kc = graph.type_index("KC").unwrap();
    let co = graph.type_index("course").unwrap();
    let le = graph.type_index("learner").unwrap();
    let vi = graph.type_index("video").unwrap();

    // course 0 covers the low KCs, course 1 the high ones
    for (l, c) in [(0, 0), (1, 0), (2, 0), (2, 1), (3, 1), (4, 1)] {
        graph.add_edge(le, l, co, c).unwrap();
    }
    for (c, v) in [(0, 0), (0, 1), (1, 1), (1, 2)] {
        graph.add_edge(co, c, vi, v).unwrap();
    }
    for (v, k) in [(0, 0), (0, 1), (1, 2), (1, 3), (1, 4), (2, 5), (2, 6), (2, 7)] {
        graph.add_edge(vi, v, kc, k).unwrap();
    }
    for (c, k) in [(0, 0), (0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (1, 6), (1, 7)] {
        graph.add_edge(co, c, kc, k).unwrap();
    }

    let pos: &[(u32, &[u32])] = &[
        (0, &[0, 1, 2]),
        (1, &[1, 2, 3]),
        (2, &[2, 3, 4, 5]),
        (3, &[4, 5, 6]),
        (4, &[5, 6, 7]),
    ];
    let mut records = Vec::new();
    let mut ts = 1_500_000_000i64;
    for &(l, kcs) in pos {
        for (i, &k) in kcs.iter().enumerate() {
            // final interaction of each learner is the test positive
            let split = if i + 1 == kcs.len() {
                Split::Test
            } else {
                Split::Train
            };
            records.push(Interaction {
                learner: l,
                kc: k,
                ts,
                split,
            });
            ts += 3600;
        }
    }
    records.sort_by_key(|r| (r.ts, r.learner, r.kc));

    let kc_names = [
        "relational algebra",
        "sql joins",
        "normalization",
        "transactions",
        "indexes",
        "graph theory",
        "shortest paths",
        "spanning trees",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    Dataset {
        graph,
        interactions: InteractionLog { records },
        kc_names,
        embedding_provider: "trigram".into(),
        embedding_dim: 4,
    }
}

/// Config sized for the toy fixture: A=2, h=3, 64-bit everywhere.
pub fn toy_config() -> TrainConfig {
    TrainConfig {
        node_dim: 4,
        aspects: 2,
        aspect_dim: 3,
        coattn_dim: 3,
        max_path_len: 3,
        paths_per_pair: 2,
        gnn_layers: 2,
        epochs: 3,
        batch_size: 0,
        seed: 42,
        // only 8 KCs exist, so ranking groups use 3 negatives
        eval_negatives: 3,
        ..TrainConfig::default()
    }
}

/// Prepared model inputs plus a fixed training-triple batch.
pub fn toy_model(cfg: &TrainConfig) -> Result<(ModelData, Dataset, Vec<(u32, u32, u32)>)> {
    let ds = toy_dataset();
    let learner_ty = ds.graph.type_index("learner").unwrap();
    let kc_ty = ds.graph.type_index("KC").unwrap();
    let (ll, _) = biwalk(&ds.graph, learner_ty, cfg.max_path_len, Some(cfg.paths_per_pair))?;
    let (kk, _) = biwalk(&ds.graph, kc_ty, cfg.max_path_len, Some(cfg.paths_per_pair))?;
    let features = build_all_features(&ds)?;
    let data = ModelData::prepare(
        cfg,
        learner_ty,
        kc_ty,
        ds.graph.node_count(learner_ty) as usize,
        ds.graph.node_count(kc_ty) as usize,
        &ll,
        &kk,
        features,
    )?;
    let triples = vec![(0, 0, 6), (1, 2, 7), (2, 4, 0), (3, 5, 1), (4, 7, 2)];
    Ok((data, ds, triples))
}
