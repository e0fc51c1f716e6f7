//! Doubly-stochastic variational inference: the minibatch ELBO and its
//! reverse-mode gradients through the fixed layer graph, analytic KL
//! terms, Adam, and the training schedule. No operation here performs a
//! matrix factorization; every step is matrix products and elementwise
//! maps.

mod adam;
mod engine;
mod kl;
mod params;
mod train;

pub use adam::AdamState;
pub use engine::{elbo_minibatch, grad_elbo, ElboEstimate, GradientSet};
pub use kl::{kl_gaussian, kl_posterior_to_prior};
pub use params::{ParamKind, ParamLayout, Segment};
pub use train::{
    train, train_standardized, CsvSink, MetricsRow, MetricsSink, TrainOutcome, TrainSchedule,
    TrainedModel,
};
