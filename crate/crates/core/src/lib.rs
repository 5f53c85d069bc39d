//! Numerical laboratory for two-weight inequalities of the maximal function.
//!
//! Weights live on a uniform lattice over a root cube. Everything that the
//! theory talks about is computed exactly at lattice resolution:
//!
//! * [`dyadic`]: cube arithmetic, dyadic and shifted grids, Carleson boxes.
//! * [`field`]: weight fields on the root cube and on the upper half-space.
//! * [`operators`]: dyadic / shifted / full maximal functions, the dyadic
//!   Poisson model and its adjoint, the continuous Poisson integral and the
//!   dyadic fractional integral.
//! * [`constants`]: `A_p`-type constants, full and doubling-parent restricted
//!   testing constants, and a randomized lower bound for operator norms.
//! * [`proof`]: the four-collection decomposition of the subcubes of a test
//!   cube, with exact (rational) and double-precision engines.
//! * [`lab`]: experiment drivers used by the `twoweight` command-line tool.

pub mod constants;
pub mod dyadic;
pub mod error;
pub mod field;
pub mod lab;
pub mod operators;
pub mod proof;
pub(crate) mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
