//! Numerical laboratory for the Neumann problem -Δu = a(x) u^q with a
//! sign-changing weight a and sublinear exponent 0 < q < 1, on 1D intervals
//! and radially symmetric balls.
//!
//! The crate computes the objects the theory is organized around: the
//! principal eigenpair of the indefinite-weight eigenproblem, the
//! bifurcation amplitude t*, solution branches in the exponent q with their
//! stability, explicit radial sub/supersolution constructions with their
//! named inequality trails, solvability-interval estimates, and dead-core
//! formation sweeps with barrier-based thresholds.

pub mod branch;
pub mod deadcore;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod radial;
pub mod solve;
pub mod tridiag;
pub mod validate;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{build_grid, dirichlet_energy, integrate, residual, Field, Grid, GridSpec};
pub use weights::{check_hypotheses, check_radial_conditions, make_weight, CorpusCase, Weight};
