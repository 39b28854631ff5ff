//! Spectral analysis of `-y'' + (p + q) y` on the half-line with a Dirichlet
//! condition at the origin, where `p` is 1-periodic and `q` has compact support.
//!
//! The crate locates bound states, antibound states, virtual states and
//! resonances, and compares them with their large-energy asymptotics.

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod error;
pub mod hill;
pub mod jost;
pub mod numeric;
pub mod momentum;
pub mod ode;
pub mod oracle;
pub mod potentials;
pub mod states;
mod tableau;

pub use error::{Error, Result};
pub use num_complex::Complex64;
