//! Flow matching with a learned prior.
//!
//! Three models are trained separately:
//!
//! 1. an auxiliary encoder/decoder ([`auxprior`]) whose decoder predicts a
//!    per-dimension Gaussian prior close to the data,
//! 2. a flow network ([`flowmatch`]) that transports draws from that prior to
//!    the data under an importance-weighted loss, conditioned on the latent,
//! 3. a latent sampler ([`latentflow`]) that maps `N(0, 1)` to the encoder's
//!    latent distribution so the whole pipeline can generate from noise.
//!
//! [`pipeline`] wires them together for generation, inpainting and latent
//! editing; [`ode`] provides the fixed-step solvers; [`eval`] scores samples
//! with sliced Wasserstein and MMD; [`data`] supplies seeded toy datasets.
//! The Gaussian-prior flow-matching baseline uses the same building blocks.

pub mod auxprior;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod export;
pub mod flowmatch;
pub mod latentflow;
pub mod nn;
pub mod ode;
pub mod optim;
pub mod pipeline;
pub mod real;
pub mod rng;
pub mod sample;
pub mod train;

pub use error::{Error, Result};
pub use sample::{DiagonalGaussian, LatentCode, Sample, SampleSet};
