//! Twisted affine Kac-Moody machinery for the ODE/IM correspondence.

pub mod airy;
pub mod bethe;
pub mod cli;
pub mod error;
pub mod intertwiners;
pub mod liealg;
pub mod linalg;
pub mod odeflow;
pub mod repmatrix;
pub mod spectra;

pub use error::{OdeimError, Result};
