//! Discretization, solution and optimality certification for Bolza problems
//! constrained by second-order differential inequalities
//! `W_k(x, x', x'') <= 0` on `[0, 1]`.
//!
//! The pipeline is: build a [`problem::ContinuousProblem`], discretize it on a
//! uniform grid, [`solver::solve`] the discrete program, turn the multipliers
//! into adjoint grids with [`adjoint::reconstruct_adjoints`], and check each
//! optimality-condition set with the functions in [`verify`].

pub mod adjoint;
pub mod convexfn;
pub mod error;
pub mod example51;
pub mod fd;
mod lbfgs;
pub mod problem;
pub mod solver;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
