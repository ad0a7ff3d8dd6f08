//! Count and placement optimization of high-altitude platform stations
//! (HAPS) used as extra ranging sources for urban GNSS receivers.
//!
//! The pipeline: [`geodesy`] frames and the conical placement region,
//! [`citymodel`] LOS/NLOS ray tests against a building mesh,
//! [`errormodel`] per-link Fisher weights, [`crlb`] the averaged 3D
//! position bound, [`scenario`] inputs and fixtures, and [`optimizer`] the
//! bi-objective genetic search. [`cli`] wires them to the command line.

pub mod citymodel;
pub mod cli;
pub mod crlb;
pub mod error;
pub mod errormodel;
pub mod fixtures;
pub mod geodesy;
pub mod optimizer;
pub mod scenario;

pub use error::{Error, Result};
