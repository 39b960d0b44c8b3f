//! Simulation and analysis toolkit for quantum key distribution with the
//! transverse position and momentum of entangled photon pairs.
//!
//! The crate is organised the way the experiment is:
//!
//! * [`source`]: Gaussian model of the two-photon transverse state, its
//!   densities, a sampler and calibration against measured variances.
//! * [`detection`]: imaging / Fourier station optics, slit detectors and the
//!   quadrature oracle for coincidence probabilities.
//! * [`protocol`]: the key distribution session (accumulate, sift, estimate,
//!   abort) and the QBER arithmetic on coincidence tables.
//! * [`adversary`]: intercept-resend eavesdropping on Bob's channel.
//! * [`analysis`]: scan simulation, Gaussian peak fitting and the EPR
//!   variance-product check.
//!
//! Units: positions in mm, momenta in mm⁻¹ with ħ = 1, so the EPR bound on
//! the variance product is 1/4.

pub mod adversary;
pub mod analysis;
pub mod config;
pub mod detection;
pub mod error;
pub mod fixtures;
pub mod protocol;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod roots;
pub mod source;

mod basis;

pub use basis::{Basis, Side};
pub use error::{Error, Result};
