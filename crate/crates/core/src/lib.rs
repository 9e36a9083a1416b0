//! Seasonal dynamic stochastic block model.
//!
//! Each pair of node types `(a, b)` has a latent seasonal process (a
//! random-walk bias plus zero-sum seasonal offsets) that sets the expected
//! edge density of its block over time. This crate generates such networks,
//! infers the latent processes with a Kalman filter and RTS smoother, learns
//! the noise variances with EM, and runs the synthetic recovery experiments.

pub mod cli;
pub mod em;
pub mod error;
pub mod experiments;
pub mod fitfile;
pub mod netfile;
pub mod netgen;
pub mod rng;
pub mod seasonal;
pub mod ssm;

pub use em::{em_fit, fit_network, FitConfig, FitResult, InitBelief};
pub use error::{Error, Result};
pub use netgen::{generate, BlockPair, DynamicNetwork, NetworkConfig};
pub use seasonal::{NoiseParams, SeasonalState};
