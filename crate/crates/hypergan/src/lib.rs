//! Adversarial hyperedge prediction toolkit.
//!
//! Pipeline: a two-stage hypergraph encoder produces node embeddings, a
//! positive-guided generator decodes noise styled by a real hyperedge's
//! latent into negative-hyperedge candidates, and a max-min discriminator
//! scores candidate node sets. A bowl-shaped similarity regularizer keeps
//! generated negatives from collapsing onto the positives. Heuristic
//! samplers (SNS/MNS/CNS) build the three validation/test regimes, scored
//! with AUROC and average precision.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod discriminator;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod generator;
pub mod hypergraph;
pub mod manifest;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
