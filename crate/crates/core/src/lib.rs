//! Multiscale finite elements with advection-induced moving coordinates for
//! periodic transient advection-diffusion in one dimension.

pub mod analysis;
pub mod banded;
pub mod basis;
pub mod coeffs;
pub mod error;
pub mod experiment;
pub mod fem1d;
pub mod global;
pub mod mesh;
pub mod ode;
pub mod parallel;
pub mod quadrature;
pub mod transform;

pub use error::{Error, Result};
