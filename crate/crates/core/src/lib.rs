//! Numerical laboratory for strictly operator semistable Lévy processes:
//! spectral decomposition of the exponent, Lévy exponent evaluation,
//! Fourier-side envelope checks, closed-form fractal dimensions, numerical
//! index probes, and path simulation.

pub mod bounds;
pub mod density;
pub mod dims;
pub mod error;
pub mod levy;
pub mod probes;
pub mod quad;
pub mod regress;
pub mod rng;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
