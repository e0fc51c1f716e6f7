//! Dense row-major matrices and a seeded, reproducible random number
//! generator. Everything else in the crate builds on these two types.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::Rng;
