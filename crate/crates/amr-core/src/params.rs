//! Learnable parameter store with deterministic seed-driven initialization.
//!
//! Every tensor lives in one flat name → matrix map so the trainer, the
//! checkpoint format, and the gradient checker can all iterate parameters
//! uniformly in a stable order.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::config::{GnnVariant, TrainConfig};

/// Encoder side: the learner-endpoint and KC-endpoint encoders have separate
/// parameter sets.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Learner,
    Kc,
}

impl Side {
    pub fn tag(&self) -> &'static str {
        match self {
            Side::Learner => "learner",
            Side::Kc => "kc",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Matrix>,
}

impl ParamStore {
    /// Initialize every tensor the configured model needs. Weights are
    /// uniform in ±√(1/fan_in); biases are zero except the LSTM forget gate,
    /// which starts at 1.
    pub fn init(cfg: &TrainConfig, n_kc: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut map = BTreeMap::new();
        let (d, a, h, m) = (cfg.node_dim, cfg.aspects, cfg.aspect_dim, cfg.coattn_dim);
        let w = a * h;

        let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Matrix {
            let bound = (1.0 / fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };

        for side in ["kc", "learner"] {
            for asp in 0..a {
                map.insert(format!("enc.{side}.w_a.{asp}"), uniform(d, h, d));
            }
            for dir in ["bw", "fw"] {
                map.insert(format!("enc.{side}.lstm.{dir}.w_x"), uniform(w, 4 * w, w));
                map.insert(format!("enc.{side}.lstm.{dir}.w_h"), uniform(w, 4 * w, w));
                let mut b = Matrix::zeros((1, 4 * w));
                // gate order i,f,g,o: forget-gate bias 1.0
                b.slice_mut(ndarray::s![.., w..2 * w]).fill(1.0);
                map.insert(format!("enc.{side}.lstm.{dir}.b"), b);
            }
            map.insert(format!("enc.{side}.w_beta"), uniform(w, 1, w));

            for layer in 0..cfg.gnn_layers {
                match cfg.gnn_variant {
                    GnnVariant::Gcn => {
                        map.insert(format!("gnn.{side}.{layer}.w"), uniform(w, w, w));
                    }
                    GnnVariant::Gat => {
                        map.insert(format!("gnn.{side}.{layer}.w"), uniform(w, w, w));
                        map.insert(format!("gnn.{side}.{layer}.a_dst"), uniform(w, 1, w));
                        map.insert(format!("gnn.{side}.{layer}.a_src"), uniform(w, 1, w));
                    }
                    GnnVariant::Sage => {
                        map.insert(format!("gnn.{side}.{layer}.w"), uniform(2 * w, w, 2 * w));
                    }
                }
            }
        }

        map.insert("coattn.w_s".into(), uniform(h, h, h));
        map.insert("coattn.w_l".into(), uniform(h, m, h));
        map.insert("coattn.w_k".into(), uniform(h, m, h));
        map.insert("coattn.v_l".into(), uniform(m, 1, m));
        map.insert("coattn.v_k".into(), uniform(m, 1, m));
        map.insert("score.m".into(), uniform(m, m, m));
        map.insert("score.b".into(), Matrix::zeros((n_kc, 1)));

        Self { map }
    }

    pub fn get(&self, name: &str) -> &Matrix {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter '{name}'"))
    }

    pub fn set(&mut self, name: &str, value: Matrix) {
        self.map.insert(name.to_string(), value);
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Matrix)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.map.values().map(|m| m.len()).sum()
    }

    pub fn any_non_finite(&self) -> bool {
        self.map
            .values()
            .any(|m| m.iter().any(|v| !v.is_finite()))
    }

    /// Record every tensor as a leaf on the tape, in stable name order.
    pub fn inject(&self, tape: &mut Tape) -> ParamVars {
        let vars = self
            .map
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        ParamVars { vars }
    }
}

/// Tape handles for every parameter of one forward pass.
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter var '{name}'"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, Var)> {
        self.vars.iter().map(|(k, &v)| (k, v))
    }
}

/// Flat serialized form: JSON round-trips f64 exactly for finite values.
#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Serialize for ParamStore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<ParamEntry> = self
            .map
            .iter()
            .map(|(name, m)| ParamEntry {
                name: name.clone(),
                rows: m.dim().0,
                cols: m.dim().1,
                data: m.iter().cloned().collect(),
            })
            .collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamStore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries: Vec<ParamEntry> = Vec::deserialize(d)?;
        let mut map = BTreeMap::new();
        for e in entries {
            let m = Array2::from_shape_vec((e.rows, e.cols), e.data)
                .map_err(serde::de::Error::custom)?;
            map.insert(e.name, m);
        }
        Ok(Self { map })
    }
}
