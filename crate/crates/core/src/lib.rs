//! Stationary-increment Gaussian processes built from singular, atomic and
//! absolutely continuous spectral measures, simulated through chaos expansions.

pub mod chaos;
pub mod config;
pub mod covariance;
pub mod error;
pub mod processes;
pub mod qsigma;
pub mod quadrature;
pub mod spectral_measures;
pub mod wick_ito;

pub use error::{Error, Result};
