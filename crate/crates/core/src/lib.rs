//! Mollified continuum fields for particle systems driven by matrix-valued
//! potentials.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; file formats, the command line and thread pools
//! live in the `molfield` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conservation;
pub mod dual;
pub mod dynamics;
pub mod ensemble;
mod error;
pub mod fields;
pub mod geometry;
pub mod mollifier;
pub mod nonlinear_eigen;
pub mod potential;
pub mod quadrature;

pub use error::{Error, Result};

/// Position, momentum or gradient of a single particle.
pub type Vec3 = nalgebra::Vector3<f64>;
