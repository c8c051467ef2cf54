//! Random walks on plain groups `F_d * G_1 * ... * G_m`.
//!
//! The crate linearizes finite-range walks into nearest-neighbor colored
//! walks, solves the hitting and traffic equations that describe the
//! harmonic measure, and evaluates drift and asymptotic entropy exactly and
//! by Monte Carlo.

pub mod boundary;
pub mod config;
pub mod drift_entropy;
pub mod error;
pub mod group;
pub mod instances;
pub mod kernel;
pub mod linalg;
pub mod linearize;
pub mod pipeline;
pub mod presets;
pub mod simulator;

pub use error::{Error, Result};
