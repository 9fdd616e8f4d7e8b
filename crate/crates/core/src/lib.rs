//! Multi-modal spatial clustering for spatial transcriptomics.
//!
//! Gene expression and histology image features are embedded by two
//! parallel graph-convolutional encoders: one over a spatial proximity graph,
//! one over an expression-similarity graph. Their embeddings are fused per
//! layer and decoded back into a denoised expression matrix. Corrupted-graph
//! contrastive losses regularize each encoder. The reconstruction is
//! clustered with a Gaussian mixture and then smoothed by spatial majority
//! vote.

pub mod cli;
pub mod clusterer;
pub mod config;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod model;
pub mod plot;
pub mod preprocess;
pub mod sparse;
pub mod synthgen;
pub mod table;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
