//! Random walk among mobile Poisson traps.
//!
//! The crate covers four layers: lattice paths and their word encoding
//! ([`lattice`]), annealed survival weights in the trap field ([`trap`]),
//! Monte Carlo over walker paths ([`gibbs`]), and finite-memory transfer
//! operators on the increment alphabet ([`transfer`]). [`harness`] wires them
//! into reproducible experiments.

pub mod error;
pub mod gibbs;
pub mod harness;
pub mod lattice;
pub mod rng;
pub mod stats;
pub mod transfer;
pub mod trap;

pub use error::{Error, Result};
