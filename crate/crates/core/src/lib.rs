//! Max-plus probabilistic solver for Hamilton–Jacobi–Bellman equations of
//! switched diffusions.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod quadform;
pub mod regression;
pub mod rng;
pub mod sampling;
pub mod scheme;
pub mod solver;

pub use error::{Error, Result};
