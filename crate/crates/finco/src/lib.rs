//! Wavepacket propagation with complex classical trajectories and
//! final-value coherent-state reconstruction, validated against an exact
//! split-operator grid propagator.

pub mod baselines;
pub mod cli_io;
pub mod contour;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod finco;
pub mod potentials;
pub mod reference_qm;
pub mod sampling;

pub use error::{FincoError, Result};
