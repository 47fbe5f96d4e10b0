//! Per-aspect importance for a learner-KC pair.
//!
//! An affinity matrix `S = ReLU(h_l · W_s · h_kᵀ)` aligns the two sides'
//! aspects; co-attention then mixes each side's projection with the other
//! side's through S, softmaxes per-aspect logits into importance weights, and
//! scales the aspect rows by those weights. The learner branch reads the
//! affinity transposed and the KC branch untransposed, which makes the two
//! roles exactly symmetric under (h, W, v) exchange with `W_s ↦ W_sᵀ`.

use crate::autodiff::{Tape, Var};
use crate::params::ParamVars;

/// Tape handles for the co-attention parameters.
#[derive(Clone, Copy)]
pub struct CoattnVars {
    pub w_s: Var,
    pub w_l: Var,
    pub w_k: Var,
    pub v_l: Var,
    pub v_k: Var,
}

impl CoattnVars {
    pub fn from_params(params: &ParamVars) -> Self {
        Self {
            w_s: params.get("coattn.w_s"),
            w_l: params.get("coattn.w_l"),
            w_k: params.get("coattn.w_k"),
            v_l: params.get("coattn.v_l"),
            v_k: params.get("coattn.v_k"),
        }
    }
}

/// One side's aspect-level output: `e` is A×m, `beta` the A×1 importance
/// distribution.
#[derive(Clone, Copy)]
pub struct AspectLevel {
    pub e: Var,
    pub beta: Var,
}

/// Aspect-level affinity `S[a,b] = ReLU(h_l[a] · W_s · h_k[b])`, A×A.
pub fn affinity(tape: &mut Tape, h_l: Var, h_k: Var, w_s: Var) -> Var {
    let lw = tape.matmul(h_l, w_s);
    let kt = tape.transpose(h_k);
    let s = tape.matmul(lw, kt);
    tape.relu(s)
}

/// Co-attend a learner/KC pair given their A×h aspect representations and
/// the affinity from [`affinity`] on the same pair.
pub fn coattend(
    tape: &mut Tape,
    h_l: Var,
    h_k: Var,
    s: Var,
    vars: &CoattnVars,
) -> (AspectLevel, AspectLevel) {
    let lw = tape.matmul(h_l, vars.w_l);
    let kw = tape.matmul(h_k, vars.w_k);
    let st = tape.transpose(s);

    let cross_l = tape.matmul(st, kw);
    let pre_l = tape.add(lw, cross_l);
    let hl_tilde = tape.relu(pre_l);
    let logits_l = tape.matmul(hl_tilde, vars.v_l);
    let beta_l = tape.softmax_col(logits_l);
    let e_l = tape.row_scale(hl_tilde, beta_l);

    let cross_k = tape.matmul(s, lw);
    let pre_k = tape.add(kw, cross_k);
    let hk_tilde = tape.relu(pre_k);
    let logits_k = tape.matmul(hk_tilde, vars.v_k);
    let beta_k = tape.softmax_col(logits_k);
    let e_k = tape.row_scale(hk_tilde, beta_k);

    (
        AspectLevel { e: e_l, beta: beta_l },
        AspectLevel { e: e_k, beta: beta_k },
    )
}
