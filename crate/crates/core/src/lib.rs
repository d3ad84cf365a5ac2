//! Doubly accelerated stochastic variance reduced dual averaging for
//! regularized empirical risk minimization, with proximal baselines, lazy
//! sparse updates, dataset loading and an experiment harness.

pub mod baseline;
pub mod data_io;
pub mod dasvrda;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod lazy;
pub mod problem;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{Dataset, ElasticNet, LossKind, Problem, Regularizer};
pub use sampling::{RngStream, SamplingKind, SamplingScheme};
pub use solver::{StageReport, StageSolver};
