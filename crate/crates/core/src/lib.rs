//! Monte Carlo sampling and percolation analysis for two-dimensional O(N)
//! ferromagnets on periodic triangular and square lattices.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod lattice;
pub mod observables;
pub mod output;
pub mod percolation;
pub mod region;
pub mod rng;
pub mod sampler;
pub mod spin;
pub mod stats;
pub mod union_find;

pub use error::{Error, Result};
