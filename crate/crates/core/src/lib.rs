//! Simulation and decoding of triangular 4.8.8 color codes.

pub mod circuit;
pub mod cli;
pub mod decoder;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod matching;
pub mod noise;
pub mod projection;

pub use error::{Error, Result};
