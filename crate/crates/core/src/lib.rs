//! Numerical laboratory for the harmonic map heat flow of maps `S^2 -> S^2`.

pub mod analytic;
pub mod diagnostics;
pub mod energetics;
pub mod error;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod vec3;

pub use error::{HmError, Result};
