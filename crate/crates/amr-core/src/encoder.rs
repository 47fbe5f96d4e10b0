//! Aspect-based path encoding.
//!
//! Each path node's d-dim feature is projected through A aspect-specific
//! matrices into an A×h aspect embedding, the flattened per-node embeddings
//! run through a bi-directional LSTM (per-position outputs are the sum of the
//! two directions, keeping width A·h), and attention pooling over positions
//! yields one edge feature per endpoint pair. All of a pair's sampled paths
//! are concatenated in deterministic path order into a single position
//! sequence, so attention allocates importance across every intermediary
//! node of the pair.

use std::collections::{BTreeMap, HashMap};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{AmrError, Result};
use crate::features::FeatureMatrix;
use crate::graph::NodeRef;
use crate::params::{ParamVars, Side};
use crate::paths::PathSet;

/// Tape handles for one encoder side's parameters.
pub struct EncoderVars {
    pub w_a: Vec<Var>,
    pub fw: LstmVars,
    pub bw: LstmVars,
    pub w_beta: Var,
}

pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
}

impl EncoderVars {
    pub fn from_params(params: &ParamVars, side: Side, aspects: usize) -> Self {
        let tag = side.tag();
        let dir = |d: &str| LstmVars {
            w_x: params.get(&format!("enc.{tag}.lstm.{d}.w_x")),
            w_h: params.get(&format!("enc.{tag}.lstm.{d}.w_h")),
            b: params.get(&format!("enc.{tag}.lstm.{d}.b")),
        };
        Self {
            w_a: (0..aspects)
                .map(|a| params.get(&format!("enc.{tag}.w_a.{a}")))
                .collect(),
            fw: dir("fw"),
            bw: dir("bw"),
            w_beta: params.get(&format!("enc.{tag}.w_beta")),
        }
    }
}

/// Project one node feature (1×d) through the aspect stack into an A×h
/// matrix: row a is `feature · W_a[a]`.
pub fn aspect_project(tape: &mut Tape, feature: Var, w_a: &[Var]) -> Result<Var> {
    let d = tape.value(feature).dim();
    if d.0 != 1 {
        return Err(AmrError::Shape(format!("feature must be 1×d, got {d:?}")));
    }
    for &w in w_a {
        if tape.value(w).dim().0 != d.1 {
            return Err(AmrError::Shape(format!(
                "feature dim {} does not match projection rows {}",
                d.1,
                tape.value(w).dim().0
            )));
        }
    }
    let rows: Vec<Var> = w_a.iter().map(|&w| tape.matmul(feature, w)).collect();
    Ok(tape.concat_rows(&rows))
}

/// A×h aspect matrix flattened row-major to 1×(A·h).
pub fn flatten_aspects(tape: &mut Tape, m: Var) -> Var {
    let (a, h) = tape.value(m).dim();
    tape.reshape(m, 1, a * h)
}

fn lstm_direction(tape: &mut Tape, inputs: &[Var], p: &LstmVars) -> Vec<Var> {
    let n = tape.value(inputs[0]).dim().0;
    let w = tape.value(p.w_x).dim().0;
    let mut h = tape.leaf(Matrix::zeros((n, w)));
    let mut c = tape.leaf(Matrix::zeros((n, w)));
    let mut outputs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let xp = tape.matmul(x, p.w_x);
        let hp = tape.matmul(h, p.w_h);
        let lin = tape.add(xp, hp);
        let pre = tape.add_rowvec(lin, p.b);
        let i_pre = tape.slice_cols(pre, 0, w);
        let f_pre = tape.slice_cols(pre, w, w);
        let g_pre = tape.slice_cols(pre, 2 * w, w);
        let o_pre = tape.slice_cols(pre, 3 * w, w);
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        c = tape.add(fc, ig);
        let tc = tape.tanh(c);
        h = tape.mul(o, tc);
        outputs.push(h);
    }
    outputs
}

/// Bi-directional LSTM over a nonempty sequence of flattened aspect
/// embeddings (each 1×(A·h)); per-position output is the sum of the forward
/// and backward hidden states, stacked into I×(A·h).
pub fn encode_path(tape: &mut Tape, inputs: &[Var], enc: &EncoderVars) -> Result<Var> {
    if inputs.is_empty() {
        return Err(AmrError::Contract("encode_path on empty sequence".into()));
    }
    let rows = encode_positions(tape, inputs, enc);
    Ok(tape.concat_rows(&rows))
}

/// Per-position fused outputs, one (n×w) matrix per position.
fn encode_positions(tape: &mut Tape, inputs: &[Var], enc: &EncoderVars) -> Vec<Var> {
    let fw = lstm_direction(tape, inputs, &enc.fw);
    let rev: Vec<Var> = inputs.iter().rev().copied().collect();
    let mut bw = lstm_direction(tape, &rev, &enc.bw);
    bw.reverse();
    fw.into_iter()
        .zip(bw)
        .map(|(f, b)| tape.add(f, b))
        .collect()
}

/// Attention-pool encoded positions: logits `P̃·W_β`, softmax over the I
/// positions, output `βᵀ·P̃`. Returns the pooled 1×(A·h) feature and β.
pub fn pool_path(tape: &mut Tape, p_tilde: Var, w_beta: Var) -> (Var, Var) {
    let logits = tape.matmul(p_tilde, w_beta);
    let beta = tape.softmax_col(logits);
    let bt = tape.transpose(beta);
    let pooled = tape.matmul(bt, p_tilde);
    (pooled, beta)
}

/// One endpoint pair's concatenated path node sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSequence {
    pub a: NodeRef,
    pub b: NodeRef,
    pub nodes: Vec<NodeRef>,
}

/// Flatten a pathset into per-pair node sequences (paths concatenated in
/// stored order), restricted to `pairs` when given.
pub fn pair_sequences(pathset: &PathSet, pairs: Option<&[(NodeRef, NodeRef)]>) -> Vec<PairSequence> {
    let make = |a: NodeRef, b: NodeRef| {
        let nodes: Vec<NodeRef> = pathset
            .paths_canonical(a, b)
            .iter()
            .flat_map(|p| p.nodes.iter().copied())
            .collect();
        PairSequence { a, b, nodes }
    };
    match pairs {
        Some(keys) => keys.iter().map(|&(a, b)| make(a, b)).collect(),
        None => pathset.pairs().map(|(a, b)| make(a, b)).collect(),
    }
}

/// Cache of per-node flattened aspect projections for one encoder side.
pub struct ProjectionCache<'a> {
    features: &'a [FeatureMatrix],
    feature_leaves: HashMap<NodeRef, Var>,
    projections: HashMap<NodeRef, Var>,
}

impl<'a> ProjectionCache<'a> {
    /// `features` is indexed by node type.
    pub fn new(features: &'a [FeatureMatrix]) -> Self {
        Self {
            features,
            feature_leaves: HashMap::new(),
            projections: HashMap::new(),
        }
    }

    pub fn feature(&mut self, tape: &mut Tape, node: NodeRef) -> Result<Var> {
        if let Some(&v) = self.feature_leaves.get(&node) {
            return Ok(v);
        }
        let fm = self
            .features
            .get(node.ty as usize)
            .filter(|fm| (node.id as usize) < fm.rows)
            .ok_or_else(|| AmrError::Referential {
                file: "<features>".into(),
                line: 0,
                detail: format!("no feature row for node {node:?}"),
            })?;
        let row = fm.row(node.id as usize).to_vec();
        let v = tape.leaf(Matrix::from_shape_vec((1, row.len()), row).unwrap());
        self.feature_leaves.insert(node, v);
        Ok(v)
    }

    /// Flattened 1×(A·h) projection of the node's own feature.
    pub fn project(&mut self, tape: &mut Tape, node: NodeRef, enc: &EncoderVars) -> Result<Var> {
        if let Some(&v) = self.projections.get(&node) {
            return Ok(v);
        }
        let f = self.feature(tape, node)?;
        let m = aspect_project(tape, f, &enc.w_a)?;
        let v = flatten_aspects(tape, m);
        self.projections.insert(node, v);
        Ok(v)
    }
}

/// Encode and pool every pair sequence, batching sequences of equal length so
/// the LSTM runs once per (length, position) instead of once per pair.
///
/// Output order matches `seqs`. Also returns each pair's attention weights.
pub fn encode_pairs_batched(
    tape: &mut Tape,
    seqs: &[PairSequence],
    cache: &mut ProjectionCache,
    enc: &EncoderVars,
) -> Result<Vec<(Var, Var)>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in seqs.iter().enumerate() {
        if s.nodes.is_empty() {
            return Err(AmrError::Contract(format!(
                "pair ({:?}, {:?}) has no path nodes",
                s.a, s.b
            )));
        }
        by_len.entry(s.nodes.len()).or_default().push(i);
    }

    let mut out: Vec<Option<(Var, Var)>> = vec![None; seqs.len()];
    for (len, members) in by_len {
        // position-major input matrices: X_t stacks member sequences' node t
        let mut position_inputs = Vec::with_capacity(len);
        for t in 0..len {
            let rows: Result<Vec<Var>> = members
                .iter()
                .map(|&i| cache.project(tape, seqs[i].nodes[t], enc))
                .collect();
            position_inputs.push(tape.concat_rows(&rows?));
        }
        let encoded = encode_positions(tape, &position_inputs, enc);

        // attention logits per position, assembled into an n×len matrix
        let logit_cols: Vec<Var> = encoded
            .iter()
            .map(|&o| {
                let l = tape.matmul(o, enc.w_beta);
                tape.transpose(l)
            })
            .collect();
        let logits_t = tape.concat_rows(&logit_cols);
        let logits = tape.transpose(logits_t);
        let beta = tape.softmax_rows(logits);

        let weighted: Vec<Var> = encoded
            .iter()
            .enumerate()
            .map(|(t, &o)| {
                let col = tape.slice_cols(beta, t, 1);
                tape.row_scale(o, col)
            })
            .collect();
        let pooled = tape.sum_list(&weighted);

        for (slot, &i) in members.iter().enumerate() {
            let p = tape.slice_rows(pooled, slot, 1);
            let b = tape.slice_rows(beta, slot, 1);
            let b = tape.transpose(b);
            out[i] = Some((p, b));
        }
    }
    Ok(out.into_iter().map(|o| o.expect("every pair encoded")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{max_rel_err, numeric_gradient};
    use crate::config::TrainConfig;
    use crate::params::ParamStore;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            node_dim: 3,
            aspects: 2,
            aspect_dim: 2,
            coattn_dim: 2,
            ..TrainConfig::default()
        }
    }

    fn encoder_fixture(cfg: &TrainConfig, seed: u64) -> ParamStore {
        ParamStore::init(
            &TrainConfig {
                seed,
                ..cfg.clone()
            },
            4,
        )
    }

    #[test]
    fn zero_feature_projects_to_zero() {
        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 1);
        let mut tape = Tape::new();
        let params = store.inject(&mut tape);
        let enc = EncoderVars::from_params(&params, Side::Learner, cfg.aspects);
        let f = tape.leaf(Matrix::zeros((1, cfg.node_dim)));
        let m = aspect_project(&mut tape, f, &enc.w_a).unwrap();
        assert_eq!(tape.value(m).dim(), (cfg.aspects, cfg.aspect_dim));
        assert!(tape.value(m).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_projection_repeats_feature_per_aspect() {
        // d = h, every W_a = I: aspect rows all equal the node feature
        let mut tape = Tape::new();
        let eye = tape.leaf(Matrix::eye(3));
        let f = tape.leaf(array![[0.5, -1.0, 2.0]]);
        let m = aspect_project(&mut tape, f, &[eye, eye]).unwrap();
        for row in tape.value(m).rows() {
            assert_eq!(row.to_vec(), vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn projection_matches_explicit_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, a, h) = (3, 2, 2);
        let f = Matrix::from_shape_fn((1, d), |_| rng.random_range(-1.0..1.0));
        let ws: Vec<Matrix> = (0..a)
            .map(|_| Matrix::from_shape_fn((d, h), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let mut tape = Tape::new();
        let fv = tape.leaf(f.clone());
        let wv: Vec<Var> = ws.iter().map(|w| tape.leaf(w.clone())).collect();
        let m = aspect_project(&mut tape, fv, &wv).unwrap();
        for ai in 0..a {
            for hi in 0..h {
                let mut want = 0.0;
                for di in 0..d {
                    want += f[[0, di]] * ws[ai][[di, hi]];
                }
                assert!((tape.value(m)[[ai, hi]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_shape_mismatch_errors() {
        let mut tape = Tape::new();
        let f = tape.leaf(Matrix::zeros((1, 3)));
        let w = tape.leaf(Matrix::zeros((4, 2)));
        assert!(matches!(
            aspect_project(&mut tape, f, &[w]),
            Err(AmrError::Shape(_))
        ));
    }

    #[test]
    fn single_node_path_encodes_one_row() {
        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 2);
        let mut tape = Tape::new();
        let params = store.inject(&mut tape);
        let enc = EncoderVars::from_params(&params, Side::Kc, cfg.aspects);
        let x = tape.leaf(Matrix::from_elem((1, cfg.width()), 0.3));
        let p = encode_path(&mut tape, &[x], &enc).unwrap();
        assert_eq!(tape.value(p).dim(), (1, cfg.width()));
    }

    #[test]
    fn empty_sequence_is_contract_violation() {
        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 2);
        let mut tape = Tape::new();
        let params = store.inject(&mut tape);
        let enc = EncoderVars::from_params(&params, Side::Kc, cfg.aspects);
        assert!(matches!(
            encode_path(&mut tape, &[], &enc),
            Err(AmrError::Contract(_))
        ));
    }

    #[test]
    fn zero_inputs_zero_biases_encode_to_zero() {
        let cfg = small_cfg();
        let mut store = encoder_fixture(&cfg, 3);
        let w = cfg.width();
        for dir in ["fw", "bw"] {
            store.set(&format!("enc.kc.lstm.{dir}.b"), Matrix::zeros((1, 4 * w)));
        }
        let mut tape = Tape::new();
        let params = store.inject(&mut tape);
        let enc = EncoderVars::from_params(&params, Side::Kc, cfg.aspects);
        let xs: Vec<Var> = (0..3).map(|_| tape.leaf(Matrix::zeros((1, w)))).collect();
        let p = encode_path(&mut tape, &xs, &enc).unwrap();
        assert!(tape.value(p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversed_input_with_swapped_directions_reverses_output() {
        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 4);
        let w = cfg.width();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Matrix> = (0..4)
            .map(|_| Matrix::from_shape_fn((1, w), |_| rng.random_range(-1.0..1.0)))
            .collect();

        let mut t1 = Tape::new();
        let p1 = store.inject(&mut t1);
        let enc = EncoderVars::from_params(&p1, Side::Learner, cfg.aspects);
        let vs: Vec<Var> = xs.iter().map(|x| t1.leaf(x.clone())).collect();
        let out = encode_path(&mut t1, &vs, &enc).unwrap();

        let mut t2 = Tape::new();
        let p2 = store.inject(&mut t2);
        let enc2 = EncoderVars::from_params(&p2, Side::Learner, cfg.aspects);
        let swapped = EncoderVars {
            w_a: enc2.w_a,
            fw: enc2.bw,
            bw: enc2.fw,
            w_beta: enc2.w_beta,
        };
        let rvs: Vec<Var> = xs.iter().rev().map(|x| t2.leaf(x.clone())).collect();
        let rout = encode_path(&mut t2, &rvs, &swapped).unwrap();

        let a = t1.value(out);
        let b = t2.value(rout);
        for i in 0..xs.len() {
            let diff = (&a.row(i) - &b.row(xs.len() - 1 - i))
                .iter()
                .map(|d| d.abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "row {i} differs by {diff}");
        }
    }

    #[test]
    fn pool_single_row_is_identity() {
        let mut tape = Tape::new();
        let p = tape.leaf(array![[1.0, -2.0, 3.0]]);
        let wb = tape.leaf(array![[0.7], [0.1], [-0.4]]);
        let (pooled, beta) = pool_path(&mut tape, p, wb);
        assert_eq!(tape.value(beta)[[0, 0]], 1.0);
        assert_eq!(tape.value(pooled), tape.value(p));
    }

    #[test]
    fn pool_identical_rows_is_uniform() {
        let mut tape = Tape::new();
        let row = [0.5, 0.25, -1.0];
        let p = tape.leaf(Matrix::from_shape_fn((2, 3), |(_, j)| row[j]));
        let wb = tape.leaf(array![[1.0], [0.0], [0.0]]);
        let (pooled, beta) = pool_path(&mut tape, p, wb);
        assert!((tape.value(beta)[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((tape.value(beta)[[1, 0]] - 0.5).abs() < 1e-12);
        for (j, &want) in row.iter().enumerate() {
            assert!((tape.value(pooled)[[0, j]] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_ln2_logit_weighs_two_thirds() {
        // W_β picks the first column; rows r1, r2 produce logits (ln 2, 0),
        // so P must be (2/3)·r1 + (1/3)·r2
        let ln2 = std::f64::consts::LN_2;
        let r1 = [ln2, 4.0, -1.0];
        let r2 = [0.0, 1.0, 5.0];
        let mut tape = Tape::new();
        let p = tape.leaf(array![[r1[0], r1[1], r1[2]], [r2[0], r2[1], r2[2]]]);
        let wb = tape.leaf(array![[1.0], [0.0], [0.0]]);
        let (pooled, beta) = pool_path(&mut tape, p, wb);
        assert!((tape.value(beta)[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
        for j in 0..3 {
            let want = (2.0 / 3.0) * r1[j] + (1.0 / 3.0) * r2[j];
            assert!((tape.value(pooled)[[0, j]] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_is_distribution_and_pool_stays_in_hull() {
        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let rows = rng.random_range(1..6);
            let mut tape = Tape::new();
            let params = store.inject(&mut tape);
            let enc = EncoderVars::from_params(&params, Side::Learner, cfg.aspects);
            let p = tape.leaf(Matrix::from_shape_fn((rows, cfg.width()), |_| {
                rng.random_range(-2.0..2.0)
            }));
            let (pooled, beta) = pool_path(&mut tape, p, enc.w_beta);
            let bsum: f64 = tape.value(beta).sum();
            assert!((bsum - 1.0).abs() < 1e-6);
            assert!(tape.value(beta).iter().all(|&b| b >= 0.0));
            let pv = tape.value(pooled).clone();
            let m = tape.value(p);
            for j in 0..cfg.width() {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for i in 0..rows {
                    lo = lo.min(m[[i, j]]);
                    hi = hi.max(m[[i, j]]);
                }
                assert!(pv[[0, j]] >= lo - 1e-9 && pv[[0, j]] <= hi + 1e-9);
            }
        }
    }

    /// End-to-end encoder gradients versus central differences.
    #[test]
    fn encoder_gradients_match_finite_differences() {
        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let feats: Vec<Matrix> = (0..3)
            .map(|_| Matrix::from_shape_fn((1, cfg.node_dim), |_| rng.random_range(-1.0..1.0)))
            .collect();

        let loss_for = |s: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let params = s.inject(&mut tape);
            let enc = EncoderVars::from_params(&params, Side::Learner, cfg.aspects);
            let xs: Result<Vec<Var>> = feats
                .iter()
                .map(|f| {
                    let fv = tape.leaf(f.clone());
                    let m = aspect_project(&mut tape, fv, &enc.w_a)?;
                    Ok(flatten_aspects(&mut tape, m))
                })
                .collect();
            let p = encode_path(&mut tape, &xs.unwrap(), &enc).unwrap();
            let (pooled, _) = pool_path(&mut tape, p, enc.w_beta);
            // squared sum, so gradients are position dependent
            let sq = tape.mul(pooled, pooled);
            let l = tape.sum_all(sq);
            tape.scalar(l)
        };

        let mut tape = Tape::new();
        let params = store.inject(&mut tape);
        let enc = EncoderVars::from_params(&params, Side::Learner, cfg.aspects);
        let xs: Vec<Var> = feats
            .iter()
            .map(|f| {
                let fv = tape.leaf(f.clone());
                let m = aspect_project(&mut tape, fv, &enc.w_a).unwrap();
                flatten_aspects(&mut tape, m)
            })
            .collect();
        let p = encode_path(&mut tape, &xs, &enc).unwrap();
        let (pooled, _) = pool_path(&mut tape, p, enc.w_beta);
        let sq = tape.mul(pooled, pooled);
        let l = tape.sum_all(sq);
        let grads = tape.backward(l);

        for name in ["enc.learner.w_a.0", "enc.learner.lstm.fw.w_x", "enc.learner.lstm.bw.w_h", "enc.learner.lstm.fw.b", "enc.learner.w_beta"] {
            let base = store.get(name).clone();
            let numeric = numeric_gradient(&base, 1e-5, |probe| {
                let mut s = store.clone();
                s.set(name, probe.clone());
                loss_for(&s)
            });
            let analytic = grads.wrt_or_zeros(params.get(name), base.dim());
            let err = max_rel_err(&analytic, &numeric, 1e-7);
            assert!(err <= 1e-4, "{name}: rel err {err}");
        }
    }

    #[test]
    fn batched_encoding_matches_sequential() {
        use crate::graph::HeteroGraph;
        use crate::paths::biwalk;

        let mut g = HeteroGraph::new(&[
            ("KC".into(), 3),
            ("learner".into(), 3),
            ("video".into(), 2),
        ])
        .unwrap();
        let (kc, lt, vt) = (0u16, 1u16, 2u16);
        for (l, v) in [(0, 0), (1, 0), (1, 1), (2, 1)] {
            g.add_edge(lt, l, vt, v).unwrap();
        }
        for (v, k) in [(0, 0), (0, 1), (1, 1), (1, 2)] {
            g.add_edge(vt, v, kc, k).unwrap();
        }
        let (pathset, _) = biwalk(&g, lt, 5, Some(3)).unwrap();
        assert!(pathset.num_pairs() >= 2);

        let cfg = small_cfg();
        let store = encoder_fixture(&cfg, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let features: Vec<FeatureMatrix> = (0..3)
            .map(|ty| {
                let rows = g.node_count(ty as u16) as usize;
                FeatureMatrix::from_array(
                    g.type_name(ty as u16),
                    Matrix::from_shape_fn((rows, cfg.node_dim), |_| rng.random_range(-1.0..1.0)),
                )
            })
            .collect();

        let seqs = pair_sequences(&pathset, None);
        let mut tape = Tape::new();
        let params = store.inject(&mut tape);
        let enc = EncoderVars::from_params(&params, Side::Learner, cfg.aspects);
        let mut cache = ProjectionCache::new(&features);
        let batched = encode_pairs_batched(&mut tape, &seqs, &mut cache, &enc).unwrap();

        for (seq, &(pooled, beta)) in seqs.iter().zip(&batched) {
            let xs: Vec<Var> = seq
                .nodes
                .iter()
                .map(|&n| cache.project(&mut tape, n, &enc).unwrap())
                .collect();
            let p = encode_path(&mut tape, &xs, &enc).unwrap();
            let (p_seq, b_seq) = pool_path(&mut tape, p, enc.w_beta);
            let dp = (tape.value(pooled) - tape.value(p_seq))
                .iter()
                .map(|d| d.abs())
                .fold(0.0, f64::max);
            let db = (tape.value(beta) - tape.value(b_seq))
                .iter()
                .map(|d| d.abs())
                .fold(0.0, f64::max);
            assert!(dp < 1e-12 && db < 1e-12, "pair {:?},{:?}", seq.a, seq.b);
        }
    }

    #[test]
    fn concatenated_pair_sequence_lengths() {
        use crate::graph::HeteroGraph;
        use crate::paths::{MetaPath, PathSet};

        let g = HeteroGraph::new(&[("KC".into(), 2), ("video".into(), 3)]).unwrap();
        let kc = g.type_index("KC").unwrap();
        let vt = g.type_index("video").unwrap();
        let mut set = PathSet::new(kc);
        set.insert(vec![
            MetaPath {
                nodes: vec![
                    NodeRef::new(kc, 0),
                    NodeRef::new(vt, 0),
                    NodeRef::new(kc, 1),
                ],
            },
            MetaPath {
                nodes: vec![
                    NodeRef::new(kc, 0),
                    NodeRef::new(vt, 1),
                    NodeRef::new(kc, 0),
                    NodeRef::new(vt, 2),
                    NodeRef::new(kc, 1),
                ],
            },
        ]);
        let seqs = pair_sequences(&set, None);
        assert_eq!(seqs.len(), 1);
        // lengths 3 and 5 concatenate into one 8-position sequence
        assert_eq!(seqs[0].nodes.len(), 8);
    }
}
