//! Simulation and analysis toolkit for verifying W states and two-qubit
//! entangled states with adaptive local measurements.
//!
//! The crate is organised bottom-up:
//!
//! - [`quantum`]: dense matrices, states, noise channels, Born-rule measurement
//! - [`strategy`]: verification operators and their spectral gaps
//! - [`sampler`]: Monte Carlo execution of verification tests
//! - [`analysis`]: hypothesis tests, fidelity estimation, scaling fits, CHSH
//! - [`tomography`]: Pauli-basis tomography with maximum-likelihood reconstruction
//! - [`feedback`]: closed-loop tuning of a simulated source
//! - [`io`] and [`experiment`]: file formats and reproducible command pipelines

pub mod analysis;
pub mod experiment;
pub mod feedback;
pub mod io;
pub mod quantum;
pub mod rng;
pub mod sampler;
pub mod strategy;
pub mod tomography;
