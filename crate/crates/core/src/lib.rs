//! Particle MCMC for state-space models.
//!
//! The core is an SMC engine whose output is a pure function of the
//! parameters, the data and a block of [`rng::RandomInputs`]. Holding those
//! inputs fixed across a PMMH proposal correlates the two likelihood
//! estimates; conditional SMC ([`ccsmc`]) regenerates inputs that are
//! consistent with a retained trajectory so that PMMH and particle Gibbs
//! updates can be mixed in one sweep ([`sampler`]).

pub mod backward;
pub mod ccsmc;
pub mod commands;
pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod factor;
pub mod hilbert;
pub mod io;
pub mod kalman;
pub mod models;
pub mod rng;
pub mod sampler;
pub mod smc;
pub mod special;
pub mod ssm;

pub use error::{Error, ErrorKind, Result};
