//! Information limits for detecting and localizing a faint companion next to
//! a bright star with a circular-aperture telescope, and the measurement
//! systems that approach them.

pub mod classical_info;
pub mod coronagraph;
pub mod error;
pub mod estimation;
pub mod modebasis;
pub mod optics;
pub mod quadrature;
pub mod quantum_bounds;
pub mod specfun;

pub use error::{Error, Result};
