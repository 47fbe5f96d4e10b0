//! Full-model assembly: edge features from paths, GNN aggregation over both
//! homogeneous subgraphs, and per-pair co-attentive scoring on one tape so
//! gradients reach every parameter.

use ndarray::Array2;

use crate::autodiff::{Matrix, Tape, Var};
use crate::coattention::{affinity, coattend, AspectLevel, CoattnVars};
use crate::config::TrainConfig;
use crate::encoder::{encode_pairs_batched, pair_sequences, EncoderVars, PairSequence, ProjectionCache};
use crate::error::{AmrError, Result};
use crate::features::FeatureMatrix;
use crate::gnn::{gnn_forward, HomoSubgraph};
use crate::graph::NodeRef;
use crate::params::{ParamStore, ParamVars, Side};
use crate::paths::PathSet;
use crate::scoring;

/// Everything static the forward pass needs, prepared once per run.
pub struct ModelData {
    pub cfg: TrainConfig,
    pub learner_ty: u16,
    pub kc_ty: u16,
    pub n_learners: usize,
    pub n_kcs: usize,
    pub ll_sub: HomoSubgraph,
    pub kk_sub: HomoSubgraph,
    pub ll_seqs: Vec<PairSequence>,
    pub kk_seqs: Vec<PairSequence>,
    /// Indexed by node type.
    pub features: Vec<FeatureMatrix>,
}

impl ModelData {
    pub fn prepare(
        cfg: &TrainConfig,
        learner_ty: u16,
        kc_ty: u16,
        n_learners: usize,
        n_kcs: usize,
        ll_paths: &PathSet,
        kk_paths: &PathSet,
        features: Vec<FeatureMatrix>,
    ) -> Result<Self> {
        for fm in &features {
            if fm.rows > 0 && fm.cols != cfg.node_dim {
                return Err(AmrError::Shape(format!(
                    "feature matrix for '{}' has dim {}, config says {}",
                    fm.entity_type, fm.cols, cfg.node_dim
                )));
            }
        }
        let ll_sub = HomoSubgraph::from_pathset(ll_paths, n_learners, cfg.max_neighbors);
        let kk_sub = HomoSubgraph::from_pathset(kk_paths, n_kcs, cfg.max_neighbors);
        let ll_seqs = pair_sequences(ll_paths, Some(&ll_sub.pair_keys()));
        let kk_seqs = pair_sequences(kk_paths, Some(&kk_sub.pair_keys()));
        Ok(Self {
            cfg: cfg.clone(),
            learner_ty,
            kc_ty,
            n_learners,
            n_kcs,
            ll_sub,
            kk_sub,
            ll_seqs,
            kk_seqs,
            features,
        })
    }
}

/// Tape handles produced by one whole-graph forward pass.
pub struct GraphForward {
    /// Flattened 1×(A·h) representation per learner.
    pub h_learner: Vec<Var>,
    pub h_kc: Vec<Var>,
    /// Pooled edge feature and path-attention weights per subgraph edge.
    pub ll_edge: Vec<(Var, Var)>,
    pub kk_edge: Vec<(Var, Var)>,
}

fn side_forward(
    tape: &mut Tape,
    params: &ParamVars,
    cfg: &TrainConfig,
    side: Side,
    sub: &HomoSubgraph,
    seqs: &[PairSequence],
    features: &[FeatureMatrix],
) -> Result<(Vec<Var>, Vec<(Var, Var)>)> {
    let enc = EncoderVars::from_params(params, side, cfg.aspects);
    let mut cache = ProjectionCache::new(features);
    let edge = encode_pairs_batched(tape, seqs, &mut cache, &enc)?;
    let init: Result<Vec<Var>> = (0..sub.n)
        .map(|id| cache.project(tape, NodeRef::new(sub.ty, id as u32), &enc))
        .collect();
    let edge_feats: Vec<Var> = edge.iter().map(|&(p, _)| p).collect();
    let h = gnn_forward(
        tape,
        sub,
        &edge_feats,
        &init?,
        params,
        side,
        cfg.gnn_variant,
        cfg.gnn_layers,
    );
    Ok((h, edge))
}

/// Run paths → edge features → GNN for both sides on one tape.
pub fn graph_forward(
    tape: &mut Tape,
    params: &ParamVars,
    data: &ModelData,
) -> Result<GraphForward> {
    let (h_learner, ll_edge) = side_forward(
        tape,
        params,
        &data.cfg,
        Side::Learner,
        &data.ll_sub,
        &data.ll_seqs,
        &data.features,
    )?;
    let (h_kc, kk_edge) = side_forward(
        tape,
        params,
        &data.cfg,
        Side::Kc,
        &data.kk_sub,
        &data.kk_seqs,
        &data.features,
    )?;
    Ok(GraphForward {
        h_learner,
        h_kc,
        ll_edge,
        kk_edge,
    })
}

/// Score one (learner, KC) pair given their flattened GNN representations.
pub struct PairOutput {
    pub score: Var,
    pub learner: AspectLevel,
    pub kc: AspectLevel,
}

pub fn score_pair(
    tape: &mut Tape,
    params: &ParamVars,
    cfg: &TrainConfig,
    h_l_flat: Var,
    h_k_flat: Var,
    kc_id: u32,
) -> PairOutput {
    let cv = CoattnVars::from_params(params);
    let (a, h) = (cfg.aspects, cfg.aspect_dim);
    let h_l = tape.reshape(h_l_flat, a, h);
    let h_k = tape.reshape(h_k_flat, a, h);
    let s = affinity(tape, h_l, h_k, cv.w_s);
    let (el, ek) = coattend(tape, h_l, h_k, s, &cv);
    let m_mat = params.get("score.m");
    let b_all = params.get("score.b");
    let b_k = tape.slice_rows(b_all, kc_id as usize, 1);
    let sc = scoring::score(tape, h_l_flat, h_k_flat, el.e, ek.e, m_mat, b_k, cfg.score_mode);
    PairOutput {
        score: sc,
        learner: el,
        kc: ek,
    }
}

/// One training triple's loss term: BPR on the pos/neg scores plus the
/// triplet term on the GNN representations.
pub fn triple_term(
    tape: &mut Tape,
    params: &ParamVars,
    cfg: &TrainConfig,
    fwd: &GraphForward,
    learner: u32,
    pos: u32,
    neg: u32,
) -> Var {
    let h_l = fwd.h_learner[learner as usize];
    let h_p = fwd.h_kc[pos as usize];
    let h_n = fwd.h_kc[neg as usize];
    let sp = score_pair(tape, params, cfg, h_l, h_p, pos).score;
    let sn = score_pair(tape, params, cfg, h_l, h_n, neg).score;
    let bpr = scoring::bpr_loss(tape, sp, sn);
    let tri = scoring::triplet_loss(tape, h_l, h_p, h_n, cfg.triplet_hinge);
    tape.add(bpr, tri)
}

/// Mean joint loss over a batch of (learner, pos, neg) triples.
pub fn batch_loss(
    tape: &mut Tape,
    params: &ParamVars,
    cfg: &TrainConfig,
    fwd: &GraphForward,
    triples: &[(u32, u32, u32)],
) -> Result<Var> {
    if triples.is_empty() {
        return Err(AmrError::Contract("loss over an empty batch".into()));
    }
    let terms: Vec<Var> = triples
        .iter()
        .map(|&(l, p, n)| triple_term(tape, params, cfg, fwd, l, p, n))
        .collect();
    Ok(scoring::mean_loss(tape, &terms))
}

/// Post-training forward snapshot: plain values, no tape attached.
pub struct ForwardValues {
    pub h_learner: Vec<Matrix>,
    pub h_kc: Vec<Matrix>,
    pub ll_pairs: Vec<(NodeRef, NodeRef)>,
    pub ll_edge_feats: Vec<Matrix>,
    pub ll_edge_betas: Vec<Matrix>,
    pub kk_pairs: Vec<(NodeRef, NodeRef)>,
    pub kk_edge_feats: Vec<Matrix>,
    pub kk_edge_betas: Vec<Matrix>,
}

pub fn forward_values(store: &ParamStore, data: &ModelData) -> Result<ForwardValues> {
    let mut tape = Tape::new();
    let params = store.inject(&mut tape);
    let fwd = graph_forward(&mut tape, &params, data)?;
    let take = |tape: &Tape, vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect();
    let take_pairs = |tape: &Tape, es: &[(Var, Var)]| {
        let feats: Vec<Matrix> = es.iter().map(|&(p, _)| tape.value(p).clone()).collect();
        let betas: Vec<Matrix> = es.iter().map(|&(_, b)| tape.value(b).clone()).collect();
        (feats, betas)
    };
    let (ll_edge_feats, ll_edge_betas) = take_pairs(&tape, &fwd.ll_edge);
    let (kk_edge_feats, kk_edge_betas) = take_pairs(&tape, &fwd.kk_edge);
    Ok(ForwardValues {
        h_learner: take(&tape, &fwd.h_learner),
        h_kc: take(&tape, &fwd.h_kc),
        ll_pairs: data.ll_sub.pair_keys(),
        ll_edge_feats,
        ll_edge_betas,
        kk_pairs: data.kk_sub.pair_keys(),
        kk_edge_feats,
        kk_edge_betas,
    })
}

/// Scores candidates against frozen graph representations. Safe to share
/// across threads; each call records a small private tape.
pub struct Scorer<'a> {
    pub store: &'a ParamStore,
    pub cfg: &'a TrainConfig,
    pub values: &'a ForwardValues,
}

impl Scorer<'_> {
    pub fn score_candidates(&self, learner: u32, kcs: &[u32]) -> Vec<f64> {
        let mut tape = Tape::new();
        let params = self.store.inject(&mut tape);
        let h_l = tape.leaf(self.values.h_learner[learner as usize].clone());
        kcs.iter()
            .map(|&k| {
                let h_k = tape.leaf(self.values.h_kc[k as usize].clone());
                let out = score_pair(&mut tape, &params, self.cfg, h_l, h_k, k);
                tape.scalar(out.score)
            })
            .collect()
    }

    /// Aspect-importance distributions (β_l, β_k) for one pair.
    pub fn pair_betas(&self, learner: u32, kc: u32) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let params = self.store.inject(&mut tape);
        let h_l = tape.leaf(self.values.h_learner[learner as usize].clone());
        let h_k = tape.leaf(self.values.h_kc[kc as usize].clone());
        let out = score_pair(&mut tape, &params, self.cfg, h_l, h_k, kc);
        (
            tape.value(out.learner.beta).column(0).to_vec(),
            tape.value(out.kc.beta).column(0).to_vec(),
        )
    }
}

/// Convert a feature matrix list into leaf-ready row matrices (test helper).
pub fn feature_row(fm: &FeatureMatrix, id: usize) -> Matrix {
    Array2::from_shape_vec((1, fm.cols), fm.row(id).to_vec()).expect("feature row")
}
