//! Stochastic particle creation in a cavity with a randomly moving wall.
//!
//! * [`noise`]: noise processes, their spectra and smooth realizations.
//! * [`cavity`]: mode frequencies and coupling coefficients.
//! * [`dynamics`]: mode equations, RK4 integration, Bogoliubov extraction.
//! * [`theory`]: perturbative and multiple-scale closed forms.
//! * [`ensemble`]: reproducible parallel Monte Carlo statistics.

pub mod cavity;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod noise;
pub mod theory;

pub use error::{Error, Result};
