//! Simulation of hybrid and original classical shadows, moment and
//! virtual-distillation estimators, phase metrology with a noisy probe and
//! characterization of a three-qubit controlled-SWAP gate.

pub mod characterization;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrology;
pub mod mixture;
pub mod qcore;
pub mod records;
pub mod rng;
pub mod series;
pub mod shadows;

pub use error::{Error, Result};
