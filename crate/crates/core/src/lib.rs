//! Stability of node embeddings across embedding dimensions.
//!
//! The crate trains or loads node embeddings, compares pairs of embeddings
//! with representational similarity measures, compares downstream
//! classifier outputs with functional similarity measures, and runs seeded
//! multi-run dimension sweeps that aggregate both.

pub mod classify;
pub mod cli;
pub mod embed;
pub mod error;
pub mod funcsim;
pub mod graph;
pub mod harness;
pub mod measure;
pub mod numeric;
pub mod repsim;
pub mod rng;

pub use error::{Error, Result};
pub use measure::Measure;
