//! Normal forms for Hamiltonians with aperiodically time-decaying perturbations.

pub mod birkhoff;
pub mod cheb;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fourier_taylor;
pub mod nekhoroshev;
pub mod poly;
pub mod timefn;
pub mod transform;

pub use error::{Error, Result};
