//! Asymptotic-preserving neural network solvers for the scaled linear
//! radiative transfer equation.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod loss;
pub mod problems;
pub mod quadrature;
pub mod reference;
pub mod residuals;
pub mod sampling;
pub mod sobol;
pub mod trainer;

pub use error::{Error, Result};
