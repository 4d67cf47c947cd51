//! Numerical homogenization toolkit for random divergence-form operators
//! `-div(a grad u)`: coefficient ensembles, correctors and flux potentials,
//! half-space boundary-layer correctors, and excess-decay diagnostics.
//!
//! Everything is generic over the scalar type through [`Real`]; the `*64`
//! and `*32` aliases below fix it.

pub mod calculus;
pub mod corrector;
pub mod discrete;
pub mod error;
pub mod excess;
pub mod field;
pub mod gaussian;
pub mod grid;
pub mod halfspace;
pub mod io;
pub mod linalg;
pub mod pde;
pub mod poisson;
pub mod scalar;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use grid::{Grid, Lattice, Topology};
pub use scalar::Real;

pub type CoefficientField64 = field::CoefficientField<f64>;
pub type CoefficientField32 = field::CoefficientField<f32>;
pub type ScalarField64 = discrete::ScalarField<f64>;
pub type ScalarField32 = discrete::ScalarField<f32>;
pub type VectorField64 = discrete::VectorField<f64>;
pub type VectorField32 = discrete::VectorField<f32>;
