//! Level-crossing analysis for adiabatic optimization of maximum independent
//! set: cost-function and transverse-field Hamiltonians, small-λ
//! perturbative predictions of local/global minimum crossings, exact
//! spectra to check them, and driver-field assignments that remove them.

pub mod cli;
pub mod error;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod perturb;
pub mod report;
pub mod spectrum;
pub mod strategy;

pub use error::{Error, Result};
