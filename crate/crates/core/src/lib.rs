//! Simulation and analysis of monitored Clifford+T brickwork circuits.
//!
//! Engines: a matrix-product-state simulator ([`mps`]), a stabilizer tableau
//! ([`tableau`]) and a dense state vector ([`exact`]) for small systems.
//! [`circuit`] drives single trajectories, [`ensemble`] runs parameter sweeps
//! and [`analysis`] fits the steady-state data.

pub mod analysis;
pub mod circuit;
pub mod clifford;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod magic;
pub mod mps;
pub mod pauli;
pub mod rng;
pub mod tableau;
pub mod verify;

pub use error::{Error, Result};
