//! Symmetric approximation and decentralized control design for
//! large-scale systems with permutation symmetry.

pub mod analysis;
pub mod constraints;
pub mod error;
pub mod matkit;
pub mod scenarios;
pub mod solve;
pub mod symmetry;

pub use error::{Error, Result};
