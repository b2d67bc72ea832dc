//! Langevin Monte Carlo for mixtures of strongly log-concave distributions,
//! started from data and stopped early.
//!
//! The crate covers the target ([`Mixture`]), score fields ([`ScoreModel`]),
//! the sampler ([`sampler::run_ensemble`]), log-Sobolev certificates and
//! schedules ([`inequalities`]), and sample-quality diagnostics
//! ([`diagnostics`]).

pub mod diagnostics;
pub mod error;
pub mod inequalities;
pub mod mixture;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod score;

pub use error::{Error, Result};
pub use mixture::{Component, Covariance, Mixture, SmoothnessSummary};
pub use rng::Stream;
pub use score::ScoreModel;
