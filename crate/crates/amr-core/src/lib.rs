//! Aspect-aware knowledge-concept recommendation over heterogeneous MOOC
//! graphs.
//!
//! The pipeline: ingest a typed interaction graph, discover metapaths between
//! same-type endpoints with a bi-directional walk, encode each pair's paths
//! into an aspect edge feature, aggregate over learner-learner and KC-KC
//! subgraphs with an edge-gated GNN, estimate per-aspect importance with
//! co-attention, and rank knowledge concepts with a hybrid bilinear score
//! trained under a joint BPR + triplet objective.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod features;
pub mod fixtures;
pub mod gnn;
pub mod graph;
pub mod coattention;
pub mod config;
pub mod encoder;
pub mod model;
pub mod params;
pub mod paths;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod trainer;

pub use error::{AmrError, Result};
