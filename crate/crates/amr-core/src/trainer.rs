//! End-to-end optimization: negative sampling, epoch loop, Adam, early
//! stopping on validation nDCG@5, and the finite-difference gradient checker.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{max_rel_err, numeric_gradient, Matrix, Tape};
use crate::config::TrainConfig;
use crate::error::{AmrError, Result};
use crate::eval::{build_groups, group_seed, hr_at_k, ndcg_at_k};
use crate::graph::InteractionLog;
use crate::model::{batch_loss, forward_values, graph_forward, ModelData, Scorer};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub hr5: f64,
    pub ndcg5: f64,
    /// Wall time is informational only; it never enters the training log.
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    /// Deterministic CSV log: epoch, loss, HR@5, nDCG@5.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = format!("# config_hash: {config_hash}\n");
        out.push_str("epoch,loss,hr5,ndcg5\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.hr5, e.ndcg5));
        }
        out
    }
}

/// Draw `n` distinct uniform KCs the learner has not observed.
pub fn sample_negatives(
    learner: u32,
    n_kcs: u32,
    observed: &BTreeSet<u32>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    let pool: Vec<u32> = (0..n_kcs).filter(|k| !observed.contains(k)).collect();
    if pool.len() < n {
        return Err(AmrError::ExhaustedPool { learner });
    }
    if n == 1 {
        return Ok(vec![pool[rng.random_range(0..pool.len())]]);
    }
    let mut pool = pool;
    pool.shuffle(rng);
    pool.truncate(n);
    Ok(pool)
}

/// Last `val_fraction` of each learner's train interactions by timestamp
/// become validation positives (always leaving at least one train record).
pub fn split_validation(
    interactions: &InteractionLog,
    val_fraction: f64,
) -> (Vec<(u32, u32)>, Vec<(u32, u32)>) {
    let mut per_learner: BTreeMap<u32, Vec<(i64, u32)>> = BTreeMap::new();
    for r in interactions.train() {
        per_learner.entry(r.learner).or_default().push((r.ts, r.kc));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (learner, mut recs) in per_learner {
        recs.sort_unstable();
        let n = recs.len();
        let mut n_val = ((n as f64) * val_fraction).ceil() as usize;
        n_val = n_val.min(n.saturating_sub(1));
        for (i, (_, kc)) in recs.into_iter().enumerate() {
            if i < n - n_val {
                train.push((learner, kc));
            } else {
                val.push((learner, kc));
            }
        }
    }
    (train, val)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
}

impl Adam {
    fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Matrix>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.dim()));
            *m = &*m * self.beta1 + g * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &g.mapv(|x| x * x) * (1.0 - self.beta2);
            let m_hat = &*m / bc1;
            let v_hat = &*v / bc2;
            let update = &m_hat / &(v_hat.mapv(f64::sqrt) + self.eps);
            let theta = store.get(name).clone();
            store.set(name, theta - update * self.lr);
        }
    }
}

/// Validation metrics with the current parameters, on a deterministic,
/// optionally capped subset of validation positives.
fn validation_metrics(
    cfg: &TrainConfig,
    data: &ModelData,
    store: &ParamStore,
    val_positives: &[(u32, u32)],
    observed: &[BTreeSet<u32>],
) -> Result<(f64, f64)> {
    if val_positives.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut subset: Vec<(u32, u32)> = val_positives.to_vec();
    if cfg.val_max_groups > 0 && subset.len() > cfg.val_max_groups {
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.seed, u32::MAX, 0));
        subset.shuffle(&mut rng);
        subset.truncate(cfg.val_max_groups);
        subset.sort_unstable();
    }
    let values = forward_values(store, data)?;
    let scorer = Scorer {
        store,
        cfg,
        values: &values,
    };
    let (groups, _) = build_groups(
        |l, ks| scorer.score_candidates(l, ks),
        &subset,
        observed,
        data.n_kcs as u32,
        cfg.eval_negatives,
        cfg.seed,
    );
    if groups.is_empty() {
        return Ok((0.0, 0.0));
    }
    Ok((hr_at_k(&groups, 5)?, ndcg_at_k(&groups, 5)?))
}

/// Train the model: Adam over the joint loss, fresh negative samples per
/// epoch, early stopping when validation nDCG@5 stops improving. Returns the
/// parameters of the best epoch.
pub fn train(
    cfg: &TrainConfig,
    data: &ModelData,
    interactions: &InteractionLog,
) -> Result<(ParamStore, TrainHistory)> {
    cfg.validate()?;
    let mut store = ParamStore::init(cfg, data.n_kcs);
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((store, history));
    }

    let (train_pos, val_pos) = split_validation(interactions, cfg.val_fraction);
    if train_pos.is_empty() {
        return Err(AmrError::Contract("no training interactions".into()));
    }
    // negatives during training avoid train+validation KCs; test stays unseen
    let mut observed_train: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); data.n_learners];
    for &(l, k) in train_pos.iter().chain(&val_pos) {
        observed_train[l as usize].insert(k);
    }
    // evaluation-time candidates must avoid everything the learner touched
    let observed_all = interactions.observed_by_learner(data.n_learners as u32);

    let mut adam = Adam::new(cfg.learning_rate);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.seed, epoch as u32, 1));

        let mut triples = Vec::with_capacity(train_pos.len() * cfg.neg_per_pos);
        for &(l, p) in &train_pos {
            let negs = sample_negatives(
                l,
                data.n_kcs as u32,
                &observed_train[l as usize],
                cfg.neg_per_pos,
                &mut rng,
            )?;
            for n in negs {
                triples.push((l, p, n));
            }
        }
        triples.shuffle(&mut rng);

        let batch_size = if cfg.batch_size == 0 {
            triples.len()
        } else {
            cfg.batch_size
        };

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (batch_idx, batch) in triples.chunks(batch_size).enumerate() {
            let mut tape = Tape::new();
            let params = store.inject(&mut tape);
            let fwd = graph_forward(&mut tape, &params, data)?;
            let loss = batch_loss(&mut tape, &params, cfg, &fwd, batch)?;
            let loss_val = tape.scalar(loss);
            if !loss_val.is_finite() {
                return Err(AmrError::NanLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss_val * batch.len() as f64;
            seen += batch.len();

            let grads = tape.backward(loss);
            let mut grad_map = BTreeMap::new();
            for (name, var) in params.iter() {
                let g = grads.wrt_or_zeros(var, store.get(name).dim());
                grad_map.insert(name.clone(), g);
            }
            adam.step(&mut store, &grad_map);
        }
        let loss = epoch_loss / seen as f64;

        if store.any_non_finite() {
            return Err(AmrError::NanLoss { epoch, batch: 0 });
        }

        let (hr5, ndcg5) = validation_metrics(cfg, data, &store, &val_pos, &observed_all)?;
        history.epochs.push(EpochStats {
            epoch,
            loss,
            hr5,
            ndcg5,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        let improved = match &best {
            None => true,
            Some((best_ndcg, _, _)) => ndcg5 > *best_ndcg,
        };
        if improved {
            best = Some((ndcg5, epoch, store.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_store) = best.expect("at least one epoch ran");
    history.best_epoch = Some(best_epoch);
    Ok((best_store, history))
}

/// Per-tensor worst relative error between analytic and central-difference
/// gradients of the joint loss.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_tensor: BTreeMap<String, f64>,
    pub max_rel_err: f64,
}

/// Compare analytic gradients of the joint loss against central differences
/// at `eps` for every parameter tensor.
pub fn grad_check(
    cfg: &TrainConfig,
    data: &ModelData,
    triples: &[(u32, u32, u32)],
    eps: f64,
) -> Result<GradCheckReport> {
    let store = ParamStore::init(cfg, data.n_kcs);

    let loss_with = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let params = s.inject(&mut tape);
        let fwd = graph_forward(&mut tape, &params, data)?;
        let loss = batch_loss(&mut tape, &params, cfg, &fwd, triples)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let params = store.inject(&mut tape);
    let fwd = graph_forward(&mut tape, &params, data)?;
    let loss = batch_loss(&mut tape, &params, cfg, &fwd, triples)?;
    let grads = tape.backward(loss);

    let mut per_tensor = BTreeMap::new();
    let mut worst = 0.0f64;
    for (name, var) in params.iter() {
        let base = store.get(name).clone();
        let analytic = grads.wrt_or_zeros(var, base.dim());
        let mut probe_store = store.clone();
        let numeric = numeric_gradient(&base, eps, |probe| {
            probe_store.set(name, probe.clone());
            loss_with(&probe_store).expect("forward in grad check")
        });
        // entries below the floor on both sides sit under central-difference
        // roundoff (~1e-11 at eps=1e-5 for an O(1) loss) and count as exact
        let err = max_rel_err(&analytic, &numeric, 1e-6);
        worst = worst.max(err);
        per_tensor.insert(name.clone(), err);
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_err: worst,
    })
}
