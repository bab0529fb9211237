//! IPMAN: interior-point optimization over data-defined feasible sets,
//! using a GAN discriminator as the barrier function and the generator as a
//! distribution over the optimal set.
//!
//! Pipeline: sample a feasible/infeasible dataset from a [`regions::Region`],
//! train a GAN on the feasible samples ([`gan`]), freeze the discriminator
//! and retrain the generator against an [`objectives::Objective`] plus the
//! log-discriminator barrier with a geometrically growing weight
//! ([`barrier`]), then evaluate against brute-force oracles ([`metrics`]).

pub mod barrier;
pub mod config;
pub mod error;
pub mod gan;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod numdiff;
pub mod objectives;
pub mod plot;
pub mod quantile;
pub mod regions;
pub mod rng;
pub mod run;
pub mod scalar;

pub use error::{Error, Result};

// Concrete aliases for the two supported scalar widths. Experiments and the
// CLI run in f64.
pub type Matrix2f64 = matrix::Matrix2<f64>;
pub type Matrix2f32 = matrix::Matrix2<f32>;
pub type Mlpf64 = nn::Mlp<f64>;
pub type Mlpf32 = nn::Mlp<f32>;
pub type Regionf64 = regions::Region<f64>;
pub type Objectivef64 = objectives::Objective<f64>;
