//! Rating prediction and the joint BPR + triplet objective.
//!
//! The preference score couples the GNN representations through a Frobenius
//! inner product, the aspect-level representations through a per-aspect
//! bilinear form `trace(e_l · M · e_kᵀ)`, and a per-KC bias. BPR is computed
//! in softplus form; the triplet term hinges at zero by default since the raw
//! difference-of-distances is unbounded below.

use crate::autodiff::{Tape, Var};
use crate::config::ScoreMode;

/// Preference score of one learner-KC pair.
///
/// `h_l`, `h_k` are flattened 1×(A·h) GNN outputs; `e_l`, `e_k` the A×m
/// aspect-level representations; `b_k` the KC's 1×1 bias slice.
pub fn score(
    tape: &mut Tape,
    h_l: Var,
    h_k: Var,
    e_l: Var,
    e_k: Var,
    m_mat: Var,
    b_k: Var,
    mode: ScoreMode,
) -> Var {
    let frob = tape.frob_dot(h_l, h_k);
    let base = tape.add(frob, b_k);
    match mode {
        ScoreMode::MfOnly => base,
        ScoreMode::Full => {
            // trace(e_l M e_k^T) = sum((e_l M) ⊙ e_k): per-aspect bilinear forms
            let lm = tape.matmul(e_l, m_mat);
            let bil = tape.frob_dot(lm, e_k);
            tape.add(base, bil)
        }
    }
}

/// `-log σ(pos - neg)` in numerically stable softplus form.
pub fn bpr_loss(tape: &mut Tape, pos: Var, neg: Var) -> Var {
    let diff = tape.sub(neg, pos);
    tape.softplus(diff)
}

/// `max(0, ‖h_l−h_p‖ − ‖h_l−h_n‖ + 1)`; the hinge is configurable.
pub fn triplet_loss(tape: &mut Tape, h_l: Var, h_p: Var, h_n: Var, hinge: bool) -> Var {
    let dp_vec = tape.sub(h_l, h_p);
    let dn_vec = tape.sub(h_l, h_n);
    let dp = tape.norm2(dp_vec);
    let dn = tape.norm2(dn_vec);
    let diff = tape.sub(dp, dn);
    let margin = tape.add_const(diff, 1.0);
    if hinge {
        tape.relu(margin)
    } else {
        margin
    }
}

/// Mean of per-triple `bpr + triplet` terms.
pub fn mean_loss(tape: &mut Tape, terms: &[Var]) -> Var {
    assert!(!terms.is_empty(), "mean_loss over empty batch");
    let total = tape.sum_list(terms);
    tape.scale(total, 1.0 / terms.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    fn score_value(
        h_l: &Matrix,
        h_k: &Matrix,
        e_l: &Matrix,
        e_k: &Matrix,
        m: &Matrix,
        b: f64,
        mode: ScoreMode,
    ) -> f64 {
        let mut tape = Tape::new();
        let hl = tape.leaf(h_l.clone());
        let hk = tape.leaf(h_k.clone());
        let el = tape.leaf(e_l.clone());
        let ek = tape.leaf(e_k.clone());
        let mm = tape.leaf(m.clone());
        let bk = tape.scalar_leaf(b);
        let s = score(&mut tape, hl, hk, el, ek, mm, bk, mode);
        tape.scalar(s)
    }

    #[test]
    fn all_zero_inputs_score_zero() {
        let z14 = Matrix::zeros((1, 4));
        let z22 = Matrix::zeros((2, 2));
        let m = Matrix::zeros((2, 2));
        assert_eq!(score_value(&z14, &z14, &z22, &z22, &m, 0.0, ScoreMode::Full), 0.0);
    }

    #[test]
    fn unit_frobenius_alignment_scores_one() {
        // e-terms zero, h_l = h_k with unit Frobenius norm, b = 0
        let h = array![[0.5, 0.5, 0.5, 0.5]];
        let z = Matrix::zeros((2, 2));
        let m = Matrix::zeros((2, 2));
        let got = score_value(&h, &h, &z, &z, &m, 0.0, ScoreMode::Full);
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_matches_hand_evaluated_bilinear_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, h, m_dim) = (2, 2, 2);
        let h_l = rand_mat(&mut rng, 1, a * h);
        let h_k = rand_mat(&mut rng, 1, a * h);
        let e_l = rand_mat(&mut rng, a, m_dim);
        let e_k = rand_mat(&mut rng, a, m_dim);
        let m = rand_mat(&mut rng, m_dim, m_dim);
        let b = rng.random_range(-1.0..1.0);

        let mut frob = 0.0;
        for j in 0..a * h {
            frob += h_l[[0, j]] * h_k[[0, j]];
        }
        let mut bil = 0.0;
        for asp in 0..a {
            for i in 0..m_dim {
                for j in 0..m_dim {
                    bil += e_l[[asp, i]] * m[[i, j]] * e_k[[asp, j]];
                }
            }
        }
        let got = score_value(&h_l, &h_k, &e_l, &e_k, &m, b, ScoreMode::Full);
        assert!((got - (frob + bil + b)).abs() < 1e-12);

        let got_mf = score_value(&h_l, &h_k, &e_l, &e_k, &m, b, ScoreMode::MfOnly);
        assert!((got_mf - (frob + b)).abs() < 1e-12);
    }

    #[test]
    fn score_is_bilinear_in_h_for_fixed_aspect_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h_l = rand_mat(&mut rng, 1, 6);
        let h_k = rand_mat(&mut rng, 1, 6);
        let e = rand_mat(&mut rng, 2, 3);
        let m = rand_mat(&mut rng, 3, 3);
        let b = 0.7;
        let alpha = 2.5;
        let base = score_value(&h_l, &h_k, &e, &e, &m, b, ScoreMode::Full);
        let scaled = score_value(&(&h_l * alpha), &h_k, &e, &e, &m, b, ScoreMode::Full);
        let frob = base
            - b
            - {
                // remove fixed aspect term to isolate the Frobenius part
                let zero_h = Matrix::zeros((1, 6));
                score_value(&zero_h, &h_k, &e, &e, &m, 0.0, ScoreMode::Full)
            };
        assert!((scaled - base - (alpha - 1.0) * frob).abs() < 1e-10);
    }

    fn bpr_value(pos: f64, neg: f64) -> f64 {
        let mut tape = Tape::new();
        let p = tape.scalar_leaf(pos);
        let n = tape.scalar_leaf(neg);
        let l = bpr_loss(&mut tape, p, n);
        tape.scalar(l)
    }

    #[test]
    fn bpr_equal_scores_is_ln2() {
        assert!((bpr_value(1.3, 1.3) - LN2).abs() < 1e-12);
    }

    #[test]
    fn bpr_is_monotone_and_vanishes_in_the_limit() {
        let mut prev = bpr_value(0.0, 0.0);
        for k in 1..8 {
            let cur = bpr_value(10.0 * k as f64, 0.0);
            assert!(cur < prev);
            prev = cur;
        }
        assert!(bpr_value(750.0, 0.0) == 0.0);
        assert!(bpr_value(1.0, 0.0) > 0.0);
    }

    #[test]
    fn bpr_unit_gap_is_softplus_of_minus_one() {
        let want = (-1.0f64).exp().ln_1p();
        assert!((bpr_value(1.0, 0.0) - want).abs() < 1e-12);
        assert!((want - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn bpr_symmetry_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            let total = bpr_value(a, b) + bpr_value(b, a);
            assert!(total >= 2.0 * LN2 - 1e-12);
            if (a - b).abs() < 1e-12 {
                assert!((total - 2.0 * LN2).abs() < 1e-12);
            } else {
                assert!(total > 2.0 * LN2);
            }
        }
    }

    fn triplet_value(h_l: &Matrix, h_p: &Matrix, h_n: &Matrix, hinge: bool) -> f64 {
        let mut tape = Tape::new();
        let l = tape.leaf(h_l.clone());
        let p = tape.leaf(h_p.clone());
        let n = tape.leaf(h_n.clone());
        let t = triplet_loss(&mut tape, l, p, n, hinge);
        tape.scalar(t)
    }

    #[test]
    fn triplet_equal_pos_neg_is_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = rand_mat(&mut rng, 1, 5);
        let q = rand_mat(&mut rng, 1, 5);
        assert!((triplet_value(&h, &q, &q, true) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triplet_hand_cases() {
        // h_l = h_p, ‖h_l − h_n‖ = 3 → max(0, 0 − 3 + 1) = 0
        let h_l = array![[0.0, 0.0, 0.0]];
        let h_n = array![[3.0, 0.0, 0.0]];
        assert_eq!(triplet_value(&h_l, &h_l, &h_n, true), 0.0);
        // unhinged form goes negative
        assert_eq!(triplet_value(&h_l, &h_l, &h_n, false), -2.0);
        // h_l = h_n, ‖h_l − h_p‖ = 2 → 2 − 0 + 1 = 3
        let h_p = array![[0.0, 2.0, 0.0]];
        assert_eq!(triplet_value(&h_l, &h_p, &h_l, true), 3.0);
    }

    #[test]
    fn triplet_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 4;
        for _ in 0..20 {
            let h_l = rand_mat(&mut rng, 1, dim);
            let h_p = rand_mat(&mut rng, 1, dim);
            let h_n = rand_mat(&mut rng, 1, dim);
            // Householder reflection: orthogonal, hence an isometry
            let v = rand_mat(&mut rng, 1, dim);
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            let mut rot = Matrix::eye(dim);
            for i in 0..dim {
                for j in 0..dim {
                    rot[[i, j]] -= 2.0 * v[[0, i]] * v[[0, j]] / norm2;
                }
            }
            let base = triplet_value(&h_l, &h_p, &h_n, true);
            let rotated = triplet_value(&h_l.dot(&rot), &h_p.dot(&rot), &h_n.dot(&rot), true);
            assert!((base - rotated).abs() <= 1e-8);
        }
    }

    #[test]
    fn mean_loss_batch_properties() {
        // one triple with equal scores and equal pos/neg reps: ln 2 + 1
        let mut tape = Tape::new();
        let h = tape.leaf(array![[0.3, -0.4]]);
        let q = tape.leaf(array![[1.0, 0.2]]);
        let s = tape.scalar_leaf(0.9);
        let bpr = bpr_loss(&mut tape, s, s);
        let tri = triplet_loss(&mut tape, h, q, q, true);
        let term = tape.add(bpr, tri);
        let single = mean_loss(&mut tape, &[term]);
        assert!((tape.scalar(single) - (LN2 + 1.0)).abs() < 1e-12);
        assert!(tape.scalar(single) >= 0.0);

        // duplicating the batch leaves the mean unchanged
        let doubled = mean_loss(&mut tape, &[term, term]);
        assert_eq!(tape.scalar(single), tape.scalar(doubled));
    }
}
