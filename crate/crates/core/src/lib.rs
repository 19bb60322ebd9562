//! Numerical lab for fully nonlinear nonlocal parabolic equations with rough
//! kernels in one space dimension.

pub mod domain;
pub mod error;
pub mod evolution;
pub mod kernels;
pub mod operators;
pub mod quadrature;
pub mod regularity;
pub mod rng;

pub use error::{Error, Result};
