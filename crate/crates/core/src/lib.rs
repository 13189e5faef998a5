//! Numerical laboratory for the discrete Gaussian interface model whose
//! Hamiltonian mixes a gradient (surface tension) and a Laplacian (bending)
//! term.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] classifies lattice points of the unit box or disc,
//! * [`operators`] holds grid functions, difference stencils and discrete norms,
//! * [`dirichlet`] assembles and factors the restricted operators and computes
//!   Green's functions,
//! * [`field`] draws exact samples of the Gibbs field, interpolates them and
//!   pairs them with test functions,
//! * [`rw1d`] is the one-dimensional random-walk representation,
//! * [`convergence`] measures finite-difference errors against manufactured
//!   solutions,
//! * [`spectral`] computes eigenpairs, Weyl exponents, series fields and
//!   negative Sobolev norms.

pub mod convergence;
pub mod dirichlet;
pub mod error;
pub mod field;
pub mod grid;
pub(crate) mod linalg;
pub mod operators;
pub mod rw1d;
pub mod spectral;

pub use error::{Error, Result};
