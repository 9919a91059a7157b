//! Bayesian global Cox model with M-spline baseline and a regularized
//! horseshoe prior on the treatment-by-subgroup interactions, sampled with
//! Hamiltonian Monte Carlo.

pub mod diag;
pub mod hmc;
pub mod model;

pub use hmc::{hmc_sample, HmcConfig, PosteriorDraws, SamplerError};
pub use model::{HorseshoeConfig, HorseshoeModel};
