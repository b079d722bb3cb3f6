//! Two-mode superradiance simulator for ensembles of V-type three-level
//! atoms.
//!
//! The crate integrates the master equation for the collective decay of 2N
//! atoms with two radiating transitions, extracts the standard superradiance
//! observables (intensities, pulse areas, buildup delays, timing noise), and
//! provides the analysis used to check the Dicke scaling laws and the timing
//! of the two-pulse cascade.

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod observables;
pub mod oracle;
pub mod runner;
pub mod statespace;

pub use error::{Error, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
