//! Numerical laboratory for peakon weak solutions of the Camassa–Holm
//! equation: multipeakon evolution, characteristics, and the measures of
//! energy accretion and dissipation at wave breaking.

pub mod characteristics;
pub mod error;
pub mod extrapolate;
pub mod field;
pub mod measures;
pub mod ode;
pub mod peakon;
pub mod prolongation;
pub mod quadrature;
pub mod scenario;
pub mod solution;

pub use error::{Error, Result};
