//! Aspect aggregation over homogeneous subgraphs.
//!
//! The learner-learner and KC-KC subgraphs connect same-type nodes whose
//! pairs carry pooled path representations; those edge features gate neighbor
//! messages elementwise. Aggregation is a degree-normalized mean with a
//! self-loop whose gate is all ones, so isolated nodes fall back to a plain
//! transform of their own features and nothing ever divides by zero.
//!
//! Node representations stay flattened at 1×(A·h) throughout.

use std::collections::BTreeMap;

use crate::autodiff::{Matrix, Tape, Var};
use crate::config::GnnVariant;
use crate::graph::NodeRef;
use crate::params::{ParamVars, Side};
use crate::paths::PathSet;

/// Node set of one type with symmetric edges carrying edge-feature slots.
#[derive(Clone, Debug)]
pub struct HomoSubgraph {
    pub ty: u16,
    pub n: usize,
    /// Canonical (a < b) endpoint id pairs, ascending.
    pub edges: Vec<(u32, u32)>,
    /// Per node: (neighbor id, edge index) in ascending neighbor order.
    pub neighbors: Vec<Vec<(u32, usize)>>,
}

impl HomoSubgraph {
    /// Build from discovered pairs. With `max_neighbors > 0` each node ranks
    /// its candidate neighbors by (shortest path, more paths, smaller id) and
    /// an edge survives if either side keeps it.
    pub fn from_pathset(pathset: &PathSet, n: usize, max_neighbors: usize) -> Self {
        let mut candidate: Vec<(u32, u32)> = pathset
            .pairs()
            .map(|(a, b)| (a.id, b.id))
            .collect();

        if max_neighbors > 0 {
            let mut rank: BTreeMap<u32, Vec<(usize, usize, u32)>> = BTreeMap::new();
            for (a, b) in pathset.pairs() {
                let paths = pathset.paths_canonical(a, b);
                let shortest = paths.iter().map(|p| p.len()).min().unwrap_or(usize::MAX);
                let count = paths.len();
                rank.entry(a.id).or_default().push((shortest, count, b.id));
                rank.entry(b.id).or_default().push((shortest, count, a.id));
            }
            let mut keep: std::collections::BTreeSet<(u32, u32)> = Default::default();
            for (node, mut list) in rank {
                list.sort_by(|x, y| {
                    x.0.cmp(&y.0)
                        .then(y.1.cmp(&x.1))
                        .then(x.2.cmp(&y.2))
                });
                for &(_, _, other) in list.iter().take(max_neighbors) {
                    keep.insert((node.min(other), node.max(other)));
                }
            }
            candidate.retain(|e| keep.contains(e));
        }

        candidate.sort_unstable();
        candidate.dedup();
        let mut neighbors = vec![Vec::new(); n];
        for (idx, &(a, b)) in candidate.iter().enumerate() {
            neighbors[a as usize].push((b, idx));
            neighbors[b as usize].push((a, idx));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self {
            ty: pathset.endpoint_ty,
            n,
            edges: candidate,
            neighbors,
        }
    }

    pub fn pair_keys(&self) -> Vec<(NodeRef, NodeRef)> {
        self.edges
            .iter()
            .map(|&(a, b)| (NodeRef::new(self.ty, a), NodeRef::new(self.ty, b)))
            .collect()
    }
}

/// Per-layer parameter handles for one side.
struct LayerVars {
    w: Var,
    a_src: Option<Var>,
    a_dst: Option<Var>,
}

fn layer_vars(params: &ParamVars, side: Side, layer: usize, variant: GnnVariant) -> LayerVars {
    let tag = side.tag();
    LayerVars {
        w: params.get(&format!("gnn.{tag}.{layer}.w")),
        a_src: matches!(variant, GnnVariant::Gat)
            .then(|| params.get(&format!("gnn.{tag}.{layer}.a_src"))),
        a_dst: matches!(variant, GnnVariant::Gat)
            .then(|| params.get(&format!("gnn.{tag}.{layer}.a_dst"))),
    }
}

/// Run the configured GNN variant for `layers` rounds over the subgraph.
///
/// `init[v]` is node v's initial flattened aspect embedding (1×w) and
/// `edge_feats[e]` the pooled path feature (1×w) of edge e. Output is one
/// 1×w representation per node.
pub fn gnn_forward(
    tape: &mut Tape,
    sub: &HomoSubgraph,
    edge_feats: &[Var],
    init: &[Var],
    params: &ParamVars,
    side: Side,
    variant: GnnVariant,
    layers: usize,
) -> Vec<Var> {
    assert_eq!(edge_feats.len(), sub.edges.len(), "edge feature count");
    assert_eq!(init.len(), sub.n, "initial feature count");
    assert!(layers >= 1, "at least one layer");
    let mut h: Vec<Var> = init.to_vec();
    for layer in 0..layers {
        let lv = layer_vars(params, side, layer, variant);
        h = match variant {
            GnnVariant::Gcn => gcn_layer(tape, sub, edge_feats, &h, &lv),
            GnnVariant::Gat => gat_layer(tape, sub, edge_feats, &h, &lv),
            GnnVariant::Sage => sage_layer(tape, sub, edge_feats, &h, &lv),
        };
    }
    h
}

/// Gated neighbor messages `h_i ⊙ P_(l,i)` for one target node.
fn gated_messages(
    tape: &mut Tape,
    sub: &HomoSubgraph,
    edge_feats: &[Var],
    h: &[Var],
    node: usize,
) -> Vec<Var> {
    sub.neighbors[node]
        .iter()
        .map(|&(nb, e)| tape.mul(h[nb as usize], edge_feats[e]))
        .collect()
}

fn gcn_layer(
    tape: &mut Tape,
    sub: &HomoSubgraph,
    edge_feats: &[Var],
    h: &[Var],
    lv: &LayerVars,
) -> Vec<Var> {
    (0..sub.n)
        .map(|v| {
            let mut msgs = gated_messages(tape, sub, edge_feats, h, v);
            // self-loop with an all-ones gate
            msgs.push(h[v]);
            let total = tape.sum_list(&msgs);
            let mean = tape.scale(total, 1.0 / msgs.len() as f64);
            let z = tape.matmul(mean, lv.w);
            tape.relu(z)
        })
        .collect()
}

fn gat_layer(
    tape: &mut Tape,
    sub: &HomoSubgraph,
    edge_feats: &[Var],
    h: &[Var],
    lv: &LayerVars,
) -> Vec<Var> {
    let (a_src, a_dst) = (lv.a_src.unwrap(), lv.a_dst.unwrap());
    (0..sub.n)
        .map(|v| {
            let msgs = gated_messages(tape, sub, edge_feats, h, v);
            let agg = if msgs.is_empty() {
                // isolated node: self-loop with ones gate, weight 1
                h[v]
            } else {
                let self_logit = tape.matmul(h[v], a_src);
                let logits: Vec<Var> = msgs
                    .iter()
                    .map(|&m| {
                        let ml = tape.matmul(m, a_dst);
                        let s = tape.add(self_logit, ml);
                        tape.leaky_relu(s, 0.2)
                    })
                    .collect();
                let stack = tape.concat_rows(&logits);
                let alpha = tape.softmax_col(stack);
                let weighted: Vec<Var> = msgs
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| {
                        let ai = tape.slice_rows(alpha, i, 1);
                        tape.scale_var(m, ai)
                    })
                    .collect();
                tape.sum_list(&weighted)
            };
            let z = tape.matmul(agg, lv.w);
            tape.relu(z)
        })
        .collect()
}

fn sage_layer(
    tape: &mut Tape,
    sub: &HomoSubgraph,
    edge_feats: &[Var],
    h: &[Var],
    lv: &LayerVars,
) -> Vec<Var> {
    let width = tape.value(h[0]).dim().1;
    (0..sub.n)
        .map(|v| {
            let msgs = gated_messages(tape, sub, edge_feats, h, v);
            let agg = if msgs.is_empty() {
                tape.leaf(Matrix::zeros((1, width)))
            } else {
                let total = tape.sum_list(&msgs);
                tape.scale(total, 1.0 / msgs.len() as f64)
            };
            // row-major flatten of [self; agg] is the column concatenation
            let stacked = tape.concat_rows(&[h[v], agg]);
            let cat = tape.reshape(stacked, 1, 2 * width);
            let z = tape.matmul(cat, lv.w);
            tape.relu(z)
        })
        .collect()
}
