//! Monte Carlo laboratory for one-dimensional gradient dynamics
//! `dX = -U'(X) dt + ε dL` driven by small heavy-tailed Lévy noise.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod levy;
pub mod limitchain;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
