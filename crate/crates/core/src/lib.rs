//! Bayesian structure learning for Gaussian graphical models with a
//! birth-death MCMC over graphs and an explicit approximation to ratios of
//! G-Wishart normalizing constants.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bdmcmc;
pub mod cli;
pub mod error;
pub mod graph;
pub mod gwishart;
pub mod manifest;
pub mod rng;
pub mod sampler;
pub mod simharness;
pub mod special;

pub use error::{Error, Result};
pub use graph::{Graph, GraphKind, PathCaps, PathProfile};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
