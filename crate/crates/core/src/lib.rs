//! Memorization auditing for score-based generative models.
//!
//! The library fits or constructs a score model on a dataset carrying a
//! synthetic fingerprint, then measures how readily the model reproduces
//! that fingerprint: a renoise/denoise probe locates the privacy indicator
//! t' on the diffusion time axis, Darboux sums bound the reproduction
//! probability over a noise-level band, and a sampling census counts
//! fingerprint matches in unconditional output.

pub mod audit;
pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod error;
pub mod fingerprint;
pub mod harness;
pub mod likelihood;
pub mod ode;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
