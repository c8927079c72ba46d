//! Simulation and programming engine for SiO₂ conductive-bridge memristors,
//! with and without an embedded Pt nanoparticle plane, in a
//! one-transistor-one-memristor cell.

pub mod bench;
pub mod circuit;
pub mod compact;
pub mod error;
pub mod params;
pub mod pde;
pub mod programming;
pub mod sweep;

pub use error::{Error, Result};
