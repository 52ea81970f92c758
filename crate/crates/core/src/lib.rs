//! Sequential Bayesian estimation of static model parameters.
//!
//! The crate provides weighted particle approximations of probability
//! measures ([`particle`]), forward models and likelihoods ([`models`]),
//! random-walk Metropolis kernels ([`kernels`]), the SIS and SMC filter loops
//! ([`filters`]), posterior diagnostics ([`diagnostics`]), CSV I/O ([`io`])
//! and the command-line front end ([`cli`]).
//!
//! ```
//! use sequifilt::filters::{run_filter, singleton_batches, FilterConfig};
//! use sequifilt::models::GaussianMeanModel;
//!
//! let model = GaussianMeanModel::new(0.5);
//! let ys = [0.2, 0.9, 0.4];
//! let trace = run_filter(&model, &singleton_batches(&ys), &FilterConfig::smc(500, 7)).unwrap();
//! let (exact, _) = GaussianMeanModel::with_sum(1.5, 3).conjugate_posterior();
//! assert!((trace.final_mean()[0] - exact).abs() < 0.1);
//! ```

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod filters;
pub mod io;
pub mod kernels;
pub mod models;
pub mod particle;
pub mod rng;

pub use error::{Error, Result};
pub use filters::{run_filter, Algorithm, FilterConfig, FilterTrace, StepRecord};
pub use models::ForwardModel;
pub use particle::{ParticleApproximation, ResampleDecision};
