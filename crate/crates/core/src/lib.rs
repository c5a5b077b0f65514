//! Single-ion Otto engine toolkit.
//!
//! Exact finite-time Otto-cycle thermodynamics of a parametric harmonic
//! oscillator ([`thermo`], [`husimi`], [`optimizer`]) and a semiclassical
//! Monte Carlo simulation of a laser-driven ion in a tapered Paul trap
//! ([`trap`], [`reservoir`], [`engine`]).

pub mod engine;
pub mod error;
pub mod husimi;
pub mod integrator;
pub mod optimizer;
pub mod output;
pub mod reservoir;
pub mod thermo;
pub mod trap;
pub mod units;

pub use error::{Error, Result};
pub use units::UnitSystem;
