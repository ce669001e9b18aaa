//! Inertial primal-dual fixed point methods for composite convex problems
//! `min_x Σᵢ Fᵢ(Kᵢx) + G(x) + H(x)`.
//!
//! * [`linop`]: linear operators, adjoints and norm estimation.
//! * [`prox`]: proximity operators and conjugates.
//! * [`precond`]: scalar and diagonal step metrics with their validity checks.
//! * [`solver`]: the inertial, relaxed primal-dual iterations.
//! * [`problems`]: L1/TV denoising and l1 logistic regression models.
//! * [`oracle`]: slow brute-force references for testing.

pub mod error;
pub mod linop;
pub mod oracle;
pub mod precond;
pub mod problems;
pub mod prox;
pub mod solver;
pub mod vector;

pub use error::{Error, Result};
pub use linop::{DenseMatrix, LinearMap, SharedMap};
pub use precond::{StepMetric, ValidatedMetric};
pub use problems::{CompositeProblem, LogRegDataset};
pub use prox::{ProxFunction, SharedProx, Step};
pub use solver::{
    run, suggest_schedule, Algorithm, DualUpdateRule, InertialSchedule, IterTriple, SolveOptions,
    SolveResult, Termination,
};
pub use vector::DenseVector;
