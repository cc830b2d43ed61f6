//! Simulation of cluster-state generation for atomic ensembles in cascaded
//! cavities, and of the probabilistic fusion of two cluster chains.
//!
//! * [`hilbert`]: composite state vectors, operators, measurement.
//! * [`dynamics`]: Hamiltonians for the three model tiers and evolution.
//! * [`protocol`]: the chain-generation and fusion procedures.
//! * [`verify`]: graph-state oracles, stabilizers, phase-aligned fidelity and
//!   approximation diagnostics.

pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod protocol;
pub mod verify;

pub use error::{Error, Result};
