//! Numerical tools for semiclassical trace formulas and spectral shift
//! asymptotics of one-dimensional matrix Schrödinger operators.

pub mod coefficients;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod microhyperbolicity;
pub mod quadrature;
pub mod quantization;
pub mod ssf;
pub mod symbols;

pub use error::{Error, Result};
