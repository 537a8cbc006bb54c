//! Economic capital for a credit portfolio under a one-factor model with
//! correlated default and recovery risk.
//!
//! The crate covers loss simulation, likelihoods of yearly default and
//! recovery data, a two-stage approximate maximum-likelihood fit, a
//! Metropolis–Hastings sampler over parameters and factor path, and capital
//! estimators that carry parameter uncertainty through to loss quantiles.

pub mod capital;
pub mod config;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod mle;
pub mod model;
pub mod normal;
pub mod optimize;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{AugmentedState, PeriodRecord, YearlyObservations};
pub use model::{LatentPath, ModelParams, Portfolio, RecoveryLink};
