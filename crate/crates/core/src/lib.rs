//! Bounded-noise laboratory.
//!
//! Tools for the Tsallis–Stariolo–Borland (TSB) bounded noise
//! `dx = -2x/(1-x²) dt + √(2(1-q)) dW` on `(-1, 1)` and its α-family
//! generalisation: scale functions and boundary classification, mean exit
//! times by quadrature, overdamped and underdamped simulation with exit
//! detection, Monte Carlo ensembles, and stationary densities.
//!
//! ```
//! use bnlab::diffusion_analysis::{mean_exit_time, QuadratureConfig};
//! use bnlab::noise_models::NoiseModel;
//!
//! let model = NoiseModel::tsb(-1.0)?;
//! let m = mean_exit_time(0.0, -1.0, 1.0, &model, &QuadratureConfig::default())?;
//! assert!((m - (std::f64::consts::PI.powi(2) / 32.0 + 0.125)).abs() < 1e-9);
//! # Ok::<(), bnlab::error::Error>(())
//! ```

// `!(a < b)` rejects NaN along with the ordinary failures.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diffusion_analysis;
pub mod error;
pub mod monte_carlo;
pub mod noise_models;
pub mod quadrature;
pub mod sde_integrators;
pub mod stationary_densities;

pub use error::{Error, Result};
