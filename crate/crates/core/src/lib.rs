//! Stochastic Cournot games played by mean-parameterized policy-gradient
//! agents, with numerical certificates for the convergence conditions.

mod error;
pub mod analysis;
pub mod cli;
pub mod experiments;
pub mod game;
pub mod learner;
pub mod poly;
pub mod rng;
pub mod stochastic;

pub use error::{Error, Result};
pub use game::{ActionProfile, CostFunction, CostKind, CournotGame, GameSpec, PriceFunction, PriceKind};
pub use stochastic::{ExpectationMethod, NoiseFamily, NoiseSpec, Policy, PolicyProfile};
