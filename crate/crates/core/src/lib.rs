//! Estimation of the generalized rank of a distributed PSD matrix.
//!
//! The matrix of interest is a sum of positive-semidefinite shards, one
//! per simulated machine. All inter-machine traffic goes through a shared
//! blackboard that quantizes every posted value and charges its exact bit
//! cost to a ledger. Two protocols are provided: a randomized one that
//! sketches a composite polynomial filter of the matrix, and a
//! deterministic one that ships quantized low-rank factors.

pub mod board;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod matio;
pub mod protocol;
pub mod spectral;

mod util;

pub use error::{Error, Result};
