//! Vision transformer with hierarchical prompting.
//!
//! Intermediate prompting blocks append a pool of learnable coarse-class
//! prompt tokens, classify the image's coarse class from the prompt outputs,
//! and let the feature tokens absorb the matching prompt before the remaining
//! blocks run. The crate carries its own small autodiff engine, data
//! loaders, trainer, and attention analysis tooling.

pub mod error;
pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod hierarchy;
pub mod kv;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod training;

pub use error::{Error, Result};
