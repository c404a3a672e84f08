//! Cascade parser for decompositional semantic graphs.
//!
//! The pipeline maps a token sequence to a syntactic tree, a
//! predicate/argument graph with multi-word spans, and masked scalar
//! attributes, stage by stage: encoder, syntactic biaffine parser,
//! optional syntax injection, word classification, node generation, span
//! assignment, semantic edge typing, and attribute prediction. Companion
//! modules cover training with weighted multi-task losses, hill-climbing
//! graph-matching evaluation, and rule-based pseudo-label augmentation.

pub mod augment;
pub mod cascade;
pub mod check;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod injection;
pub mod model;
pub mod syntax;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
