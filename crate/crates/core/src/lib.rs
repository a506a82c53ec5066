//! Simulation and inference for networks of coupled quantum harmonic
//! oscillators: spectral densities, exact probe dynamics, and recovery of
//! the spectral density and full topology from probe occupations alone.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod network;
pub mod oracle;
pub mod probing;
pub mod reconstruction;
pub mod spectral;

pub use error::{Error, Result};
