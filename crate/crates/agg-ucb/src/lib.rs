//! Neural contextual bandit simulator with arm-group graph aggregation.
//!
//! Arms arrive in groups. A kernel mean embedding over each group's observed
//! contexts yields a similarity graph; a graph neural network scores arms
//! through that graph so information flows between related groups; a
//! gradient-based confidence width turns the score into an optimistic index.
//! The crate bundles the graph estimator, the scoring network with exact
//! gradients, the confidence machinery, training, baseline agents, synthetic
//! and data-derived environments, and an experiment harness with a CLI.

pub mod confidence;
pub mod embedding;
pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod network;
pub mod policy;
pub mod trainer;

pub use error::{Error, Result};
