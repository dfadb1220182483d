//! Local projection models as seemingly unrelated regressions.
//!
//! The crate simulates a Gaussian VMA process, stacks the local projections
//! for one target variable into a multivariate regression, and provides the
//! matching Gaussian likelihood, the closed-form residual covariance implied
//! by the VMA parameters, OLS/FGLS and Gibbs estimators, and a Monte Carlo
//! harness that compares estimates with the analytic truths.

pub mod bayes;
pub mod cli;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod lp;
pub mod samplers;
pub mod table;

pub use error::{Error, Result};
