//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum AmrError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("referential error in {file} line {line}: {detail}")]
    Referential {
        file: String,
        line: usize,
        detail: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error in {file} line {line}: {detail}")]
    Parse {
        file: String,
        line: usize,
        detail: String,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("negative sampling exhausted for learner {learner}")]
    ExhaustedPool { learner: u32 },

    #[error("graph too large for exhaustive enumeration: {nodes} nodes (limit {limit})")]
    NodeBudget { nodes: usize, limit: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AmrError>;
