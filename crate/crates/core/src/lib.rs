//! Deep Gaussian processes approximated by random feature expansions.
//!
//! Each GP layer is replaced by its weight-space view: a random projection
//! drawn from the kernel's spectral measure followed by a covariance-
//! dependent activation (trigonometric for RBF, rectified linear for
//! arc-cosine) and a linear map with a factorized Gaussian posterior.
//! Training maximizes a doubly-stochastic evidence lower bound with Adam;
//! the cost per iteration is matrix products only. A Gibbs sampler
//! (elliptical slice sampling plus an exact Gaussian conditional) for
//! two-layer regression models serves as the gold standard against which
//! the variational approximation is audited.

mod error;

pub mod cli;
pub mod data;
pub mod features;
pub mod inference;
pub mod kernels;
pub mod likelihoods;
pub mod mcmc;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
