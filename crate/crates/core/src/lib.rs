//! Unsupervised phoneme and word discovery from multi-speaker feature
//! sequences.
//!
//! The pipeline stacks sparse autoencoders, factors speaker identity out of
//! the bottleneck with a parametric-bias hidden layer, and segments the
//! resulting features with a hierarchical Dirichlet process hidden language
//! model fitted by blocked Gibbs sampling.

pub mod cli;
pub mod corpus;
pub mod dsae;
pub mod error;
pub mod eval;
pub mod features;
pub mod hdphlm;
pub mod math;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
