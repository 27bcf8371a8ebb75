//! Bayesian classification of multiclass functional data.
//!
//! Curves observed on a common grid are reduced to B-spline design rows and
//! classified with ordered probit, unordered probit or multinomial logistic
//! models, averaged over the number of basis functions by marginal likelihood.
//! Discriminant baselines (functional principal components with Bayesian LDA
//! and QDA) and the simulation generators used for benchmarking live here too.

pub mod basis;
pub mod conjugate;
pub mod data;
pub mod discriminant;
pub mod distributions;
pub mod eval;
pub mod export;
pub mod error;
pub mod linalg;
pub mod logistic;
pub mod mcmc;
pub mod pipeline;
pub mod probit_ordered;
pub mod probit_unordered;
pub mod simgen;

pub use error::{Error, Result};
