//! Sparse stress-matrix design for affine formation control.
//!
//! Starting from the complete graph on a target configuration, [`solver`]
//! finds a sparse equilibrium stress whose matrix is positive semidefinite
//! with the affine nullspace of the configuration, [`rigidity`] certifies
//! the result and [`sim`] runs the consensus dynamics it induces.

// negated float comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod framework;
pub mod problem;
pub mod rigidity;
pub mod sim;
pub mod solver;
pub mod spectral;

pub use design::{design, Design};
pub use error::{Result, UrfError};
pub use framework::{Configuration, EdgeOrdering, StressMatrix, StressVector};
pub use problem::{build_problem, DesignProblem, Hyperparams};
pub use rigidity::{verify_urf, RigidityCertificate};
pub use solver::{solve, SolveParams, SolveReport, SolveStatus};
