//! Numerical tools for zero-sum stochastic differential games driven by
//! jump diffusions: a monotone scheme for the nonlocal Isaacs equations,
//! a Monte Carlo simulator for the controlled dynamics, and checks built on
//! the dynamic programming principle and a verification sandwich.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::type_complexity)]

pub mod analysis;
pub mod error;
pub mod hamiltonian;
pub mod levy;
pub mod model;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use hamiltonian::{HamiltonianChoice, Jet};
pub use levy::{build_quadrature, JumpQuadrature, LevyMeasureSpec};
pub use model::{build_problem, GameProblem, PresetRef, ProblemDescription};
pub use solver::{SchemeConfig, SpatialGrid, ValueGrid};
