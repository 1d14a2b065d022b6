//! Skew products over hyperbolic toral automorphisms with standard-map type
//! fibers: map zoo, cone and critical-set geometry, hypothesis checks,
//! Lyapunov spectra and unstable-curve bookkeeping.

pub mod cone;
pub mod curves;
pub mod error;
pub mod harness;
pub mod hypotheses;
pub mod linalg;
pub mod lyapunov;
pub mod maps;
pub mod torus;

pub use error::{Error, Result};
