//! Adaptive lowest-order finite elements for strongly monotone quasilinear
//! elliptic problems
//!
//! ```text
//! -div(mu(x, |grad u|^2) grad u) = f  in Omega,   u = 0 on Gamma_D,
//!  mu(x, |grad u|^2) d_n u       = g  on Gamma_N,
//! ```
//!
//! solved by a triple loop: newest-vertex-bisection mesh refinement, a damped
//! Banach-Picard linearization and preconditioned conjugate gradients, each
//! stopped by computable criteria that compare the corresponding increment
//! with the residual error estimator.

pub mod algsolver;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fem;
pub mod mesh;
pub mod nonlinearity;
pub mod quadrature;

pub use error::{Error, Result};
pub use mesh::{Domain, Mesh, MeshHierarchy, Point};
pub use nonlinearity::Nonlinearity;
