//! Training configuration: defaults, key-value file parsing, stable hashing.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AmrError, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnVariant {
    Gcn,
    Gat,
    Sage,
}

impl fmt::Display for GnnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GnnVariant::Gcn => write!(f, "gcn"),
            GnnVariant::Gat => write!(f, "gat"),
            GnnVariant::Sage => write!(f, "sage"),
        }
    }
}

impl std::str::FromStr for GnnVariant {
    type Err = AmrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(GnnVariant::Gcn),
            "gat" => Ok(GnnVariant::Gat),
            "sage" => Ok(GnnVariant::Sage),
            other => Err(AmrError::Schema(format!(
                "gnn_variant must be gcn|gat|sage, got '{other}'"
            ))),
        }
    }
}

/// Which terms the rating predictor uses.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Frobenius term + aspect-level bilinear term + KC bias.
    Full,
    /// Matrix-factorization ablation: Frobenius term + KC bias only.
    MfOnly,
}

impl std::str::FromStr for ScoreMode {
    type Err = AmrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScoreMode::Full),
            "mf_only" => Ok(ScoreMode::MfOnly),
            other => Err(AmrError::Schema(format!(
                "score_mode must be full|mf_only, got '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Node embedding size d.
    pub node_dim: usize,
    /// Number of aspects A.
    pub aspects: usize,
    /// Latent factors per aspect h.
    pub aspect_dim: usize,
    /// Co-attention latent size m.
    pub coattn_dim: usize,
    /// Metapath length bound L_max (node count).
    pub max_path_len: usize,
    /// Paths kept per endpoint pair p.
    pub paths_per_pair: usize,
    pub gnn_layers: usize,
    pub gnn_variant: GnnVariant,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub neg_per_pos: usize,
    pub batch_size: usize,
    /// Per-node neighbor cap when building homogeneous subgraphs; 0 = unlimited.
    pub max_neighbors: usize,
    /// Fraction of each learner's train interactions held out for validation.
    pub val_fraction: f64,
    /// Cap on validation ranking groups per epoch; 0 = all.
    pub val_max_groups: usize,
    /// Negatives per ranking group at evaluation time.
    pub eval_negatives: usize,
    /// Hinge the triplet loss at zero.
    pub triplet_hinge: bool,
    pub score_mode: ScoreMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            node_dim: 10,
            aspects: 5,
            aspect_dim: 10,
            coattn_dim: 10,
            max_path_len: 5,
            paths_per_pair: 10,
            gnn_layers: 2,
            gnn_variant: GnnVariant::Gcn,
            learning_rate: 1e-2,
            epochs: 50,
            patience: 5,
            seed: 42,
            neg_per_pos: 1,
            batch_size: 256,
            max_neighbors: 0,
            val_fraction: 0.1,
            val_max_groups: 0,
            eval_negatives: 99,
            triplet_hinge: true,
            score_mode: ScoreMode::Full,
        }
    }
}

impl TrainConfig {
    /// Width of flattened aspect representations.
    pub fn width(&self) -> usize {
        self.aspects * self.aspect_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("node_dim", self.node_dim),
            ("aspects", self.aspects),
            ("aspect_dim", self.aspect_dim),
            ("coattn_dim", self.coattn_dim),
            ("paths_per_pair", self.paths_per_pair),
            ("gnn_layers", self.gnn_layers),
            ("patience", self.patience),
            ("neg_per_pos", self.neg_per_pos),
            ("eval_negatives", self.eval_negatives),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(AmrError::Schema(format!("{name} must be positive")));
            }
        }
        if self.max_path_len < 3 {
            return Err(AmrError::Schema("max_path_len must be >= 3".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AmrError::Schema("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(AmrError::Schema("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Parse a `key = value` (or `key value`) config file; unknown keys error.
    pub fn parse(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn parse_str(text: &str, file: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => match line.split_once(char::is_whitespace) {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => {
                        return Err(AmrError::Parse {
                            file: file.into(),
                            line: i + 1,
                            detail: "expected 'key = value'".into(),
                        })
                    }
                },
            };
            let bad = |detail: String| AmrError::Parse {
                file: file.into(),
                line: i + 1,
                detail,
            };
            macro_rules! set {
                ($field:ident) => {
                    cfg.$field = value
                        .parse()
                        .map_err(|_| bad(format!("bad value '{value}' for {key}")))?
                };
            }
            match key {
                "node_dim" => set!(node_dim),
                "aspects" => set!(aspects),
                "aspect_dim" => set!(aspect_dim),
                "coattn_dim" => set!(coattn_dim),
                "max_path_len" => set!(max_path_len),
                "paths_per_pair" => set!(paths_per_pair),
                "gnn_layers" => set!(gnn_layers),
                "gnn_variant" => set!(gnn_variant),
                "learning_rate" => set!(learning_rate),
                "epochs" => set!(epochs),
                "patience" => set!(patience),
                "seed" => set!(seed),
                "neg_per_pos" => set!(neg_per_pos),
                "batch_size" => set!(batch_size),
                "max_neighbors" => set!(max_neighbors),
                "val_fraction" => set!(val_fraction),
                "val_max_groups" => set!(val_max_groups),
                "eval_negatives" => set!(eval_negatives),
                "triplet_hinge" => set!(triplet_hinge),
                "score_mode" => set!(score_mode),
                other => return Err(bad(format!("unknown config key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable hex digest of the canonical serialized config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
