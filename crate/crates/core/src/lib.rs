//! Meshfree PDE solving with frozen sinusoidal random features.
//!
//! Every operator matrix is assembled in closed form from the cyclic
//! derivative rule of `sin`, linear problems are solved by one
//! least-squares call, and nonlinear problems by a regularized Newton
//! iteration on the same matrices.

pub mod applications;
pub mod basis;
pub mod collocation;
pub mod error;
pub mod linalg;
pub mod newton;
pub mod operators;
pub mod problems;
pub mod rng;
pub mod solve;
pub mod tanh;

pub use basis::{
    eval_derivative, eval_gradient, eval_solution, Basis, BasisKind, CoefficientVector, FeatureBasis,
    FeatureBlock, FeatureMap, MultiIndex, PhaseCache, Solution,
};
pub use error::{Error, Result};
