//! Guaranteed lower bounds for 2D Maxwell eigenvalues discretized with
//! lowest-order Nédélec edge elements.
//!
//! The library is organized bottom-up:
//! - [`mesh`]: triangulations, generators, refinement, patches, mesh I/O;
//! - [`spaces`]: finite element spaces and matrix assembly;
//! - [`solvers`]: sparse factorization, constrained eigensolvers, power iteration;
//! - [`constants`]: the explicit interpolation/stability constants;
//! - [`galerkin`]: the auxiliary saddle-point problems behind the error
//!   functional and the global stability number `kappa_h`;
//! - [`eigenbounds`]: the discrete Maxwell eigenvalue problem and the bound
//!   pipeline combining everything into certified lower bounds.

pub mod constants;
pub mod eigenbounds;
pub mod error;
pub mod galerkin;
pub mod mesh;
pub mod solvers;
pub mod spaces;

pub use error::{Error, Result};
