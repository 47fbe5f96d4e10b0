//! KC content features and cross-entity feature projection.
//!
//! KC names carry the semantic signal. A pluggable [`EmbeddingProvider`]
//! turns each name into a fixed-dimension vector; the built-in provider is a
//! deterministic hashed-character-trigram embedder so nothing here needs
//! network access or model files. Non-KC entities get features by projecting
//! KC features through a degree-normalized incidence matrix.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};
use crate::graph::Dataset;

/// Per-entity-type feature matrix, |entity| × d.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub entity_type: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_array(entity_type: &str, x: Array2<f64>) -> Self {
        let (rows, cols) = x.dim();
        Self {
            entity_type: entity_type.to_string(),
            rows,
            cols,
            data: x.into_raw_vec_and_offset().0,
        }
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone()).expect("feature shape")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Maps an entity name to a fixed-dimension embedding.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, name: &str) -> Vec<f64>;
}

/// FNV-1a over bytes; stable across platforms and easy to re-derive by hand.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic hashed character-trigram embedder.
///
/// The lowercased name is padded with `^`/`$`, each character trigram is
/// FNV-1a hashed, and the embedding is the plain sum of signed one-hot basis
/// vectors: index `hash % d`, sign from the hash's top bit.
pub struct TrigramProvider {
    dim: usize,
}

impl TrigramProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl EmbeddingProvider for TrigramProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, name: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        if name.is_empty() {
            return v;
        }
        let padded: Vec<char> = std::iter::once('^')
            .chain(name.to_lowercase().chars())
            .chain(std::iter::once('$'))
            .collect();
        for tri in padded.windows(3) {
            let s: String = tri.iter().collect();
            let h = fnv1a64(s.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        v
    }
}

/// Look up a provider by descriptor name.
pub fn provider_from_name(name: &str, dim: usize) -> Result<Box<dyn EmbeddingProvider>> {
    match name {
        "trigram" => Ok(Box::new(TrigramProvider::new(dim))),
        other => Err(AmrError::Schema(format!(
            "unknown embedding provider '{other}'"
        ))),
    }
}

/// Embed every KC name into a |KC| × d feature matrix.
///
/// Empty names map to the zero vector with a warning.
pub fn kc_content_features(
    kc_names: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<FeatureMatrix> {
    if kc_names.is_empty() {
        return Err(AmrError::Contract("kc_content_features on no names".into()));
    }
    let d = provider.dim();
    let mut data = Vec::with_capacity(kc_names.len() * d);
    for (i, name) in kc_names.iter().enumerate() {
        if name.is_empty() {
            log::warn!("KC {i} has an empty name; using zero features");
        }
        let e = provider.embed(name);
        debug_assert_eq!(e.len(), d);
        data.extend_from_slice(&e);
    }
    Ok(FeatureMatrix {
        entity_type: "KC".to_string(),
        rows: kc_names.len(),
        cols: d,
        data,
    })
}

/// Sparse 0/1 incidence between an entity type and KCs: `rows[a]` holds the
/// KC ids incident to entity `a`.
#[derive(Clone, Debug)]
pub struct Incidence {
    pub rows: Vec<Vec<u32>>,
    pub n_cols: usize,
}

impl Incidence {
    pub fn from_dense(m: &Array2<f64>) -> Self {
        let (r, c) = m.dim();
        let rows = (0..r)
            .map(|i| {
                (0..c)
                    .filter(|&j| m[[i, j]] != 0.0)
                    .map(|j| j as u32)
                    .collect()
            })
            .collect();
        Self { rows, n_cols: c }
    }
}

/// Project KC content features onto another entity type:
/// `X_A = rownorm(R_AK) · X_K`, where each row of the incidence is divided by
/// its KC-degree and zero-degree rows stay zero.
pub fn project_entity_features(
    entity_type: &str,
    incidence: &Incidence,
    x_k: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    if incidence.n_cols != x_k.rows {
        return Err(AmrError::Shape(format!(
            "incidence has {} columns but KC features have {} rows",
            incidence.n_cols, x_k.rows
        )));
    }
    let d = x_k.cols;
    let mut data = vec![0.0; incidence.rows.len() * d];
    for (i, kcs) in incidence.rows.iter().enumerate() {
        if kcs.is_empty() {
            continue;
        }
        let inv = 1.0 / kcs.len() as f64;
        let out = &mut data[i * d..(i + 1) * d];
        for &k in kcs {
            let row = x_k.row(k as usize);
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x * inv;
            }
        }
    }
    Ok(FeatureMatrix {
        entity_type: entity_type.to_string(),
        rows: incidence.rows.len(),
        cols: d,
        data,
    })
}

/// Incidence of `ty` onto KCs, derived from the graph (direct relation when
/// declared, otherwise the boolean two-hop composition through the
/// intermediate type with the fewest hops) or, for learners, from train
/// interactions.
pub fn derive_kc_incidence(dataset: &Dataset, ty: u16) -> Incidence {
    let g = &dataset.graph;
    let kc_ty = g.type_index("KC").expect("KC type");
    let learner_ty = g.type_index("learner");
    let n = g.node_count(ty) as usize;
    let n_kc = g.node_count(kc_ty) as usize;

    if ty == kc_ty {
        // identity: a KC is incident to itself
        return Incidence {
            rows: (0..n).map(|i| vec![i as u32]).collect(),
            n_cols: n_kc,
        };
    }
    if Some(ty) == learner_ty {
        let mut rows: Vec<std::collections::BTreeSet<u32>> = vec![Default::default(); n];
        for r in dataset.interactions.train() {
            rows[r.learner as usize].insert(r.kc);
        }
        return Incidence {
            rows: rows.into_iter().map(|s| s.into_iter().collect()).collect(),
            n_cols: n_kc,
        };
    }
    if let Some(rel) = g.relation(ty, kc_ty) {
        let lists = if ty <= kc_ty { &rel.fwd } else { &rel.rev };
        return Incidence {
            rows: lists.clone(),
            n_cols: n_kc,
        };
    }
    // two-hop composition through any intermediate type with both relations
    for mid in 0..g.num_types() as u16 {
        if mid == ty || mid == kc_ty {
            continue;
        }
        if g.relation(ty, mid).is_some() && g.relation(mid, kc_ty).is_some() {
            let mut rows = Vec::with_capacity(n);
            for a in 0..n as u32 {
                let mut set = std::collections::BTreeSet::new();
                for &m in g.neighbors_of_type(crate::graph::NodeRef::new(ty, a), mid) {
                    for &k in g.neighbors_of_type(crate::graph::NodeRef::new(mid, m), kc_ty) {
                        set.insert(k);
                    }
                }
                rows.push(set.into_iter().collect());
            }
            return Incidence { rows, n_cols: n_kc };
        }
    }
    log::warn!(
        "no KC incidence derivable for entity type '{}'; features will be zero",
        g.type_name(ty)
    );
    Incidence {
        rows: vec![Vec::new(); n],
        n_cols: n_kc,
    }
}

/// Content + projected features for every entity type in the dataset.
pub fn build_all_features(dataset: &Dataset) -> Result<Vec<FeatureMatrix>> {
    let g = &dataset.graph;
    let kc_ty = g.type_index("KC").expect("KC type");
    let provider = provider_from_name(&dataset.embedding_provider, dataset.embedding_dim)?;
    let x_k = kc_content_features(&dataset.kc_names, provider.as_ref())?;
    let mut out = Vec::with_capacity(g.num_types());
    for ty in 0..g.num_types() as u16 {
        if ty == kc_ty {
            out.push(x_k.clone());
        } else {
            let inc = derive_kc_incidence(dataset, ty);
            out.push(project_entity_features(g.type_name(ty), &inc, &x_k)?);
        }
    }
    Ok(out)
}
