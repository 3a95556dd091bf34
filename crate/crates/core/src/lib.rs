//! Simulation and analysis of polarization-entangled photon pairs sent through
//! cross-aligned polarization-maintaining fiber pairs.
//!
//! - [`polarization`]: Jones vectors/matrices and two-photon density matrices.
//! - [`fiber`]: PMF segments, crossed pairs and SMF drift.
//! - [`entanglement`]: Bell states, channel evolution with phase compensation,
//!   fidelity sweeps.
//! - [`coincidence`]: measurement station model and Monte-Carlo counts.
//! - [`analysis`]: visibility, error propagation and fringe summaries.
//! - [`formats`]: CSV/JSON file formats.

pub mod analysis;
pub mod coincidence;
pub mod entanglement;
pub mod fiber;
pub mod formats;
pub mod polarization;
pub mod rng;
