//! Critical percolation on Galton-Watson trees.

pub mod error;
pub mod rng;
pub mod offspring;
pub mod tree;
pub mod deep;
pub mod annealed;
pub mod percolation;
pub mod martingale;
pub mod iic;
pub mod stats;

pub use error::{Error, Result};
pub mod acceptance;
