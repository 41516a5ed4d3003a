//! Simulation and design checks for a dissociation-time-entangled (DTE)
//! atom-pair Bell test: Feshbach double-pulse dissociation spectra,
//! switched Mach–Zehnder fringe integrals, CHSH values, and the optics and
//! feasibility audit of a ⁶Li₂ baseline scenario.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod feshbach;
pub mod interferometer;
pub mod optics;
pub mod quadrature;
pub mod scenario;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
