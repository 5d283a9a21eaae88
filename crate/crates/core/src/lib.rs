//! Congestion-aware multi-agent trajectory prediction, desk scale.
//!
//! A teacher summarizes how close agents are to mutual collision: per-frame
//! interaction graphs weighted by inverse collision time feed a graph
//! variational autoencoder, and a Gaussian mixture is fitted over the latent
//! codes. A student predicts future trajectories with an
//! encoder-pooling-decoder network while matching the teacher's mixture
//! through a variational upper bound on the KL divergence between mixtures,
//! solved by coordinate descent over coupling matrices.
//!
//! The crate is `no_std` (with `alloc`); everything here is pure computation.
//! File formats, the CLI, and run orchestration live in the companion
//! `congest-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cpm;
pub mod error;
pub mod fp;
pub mod gaussian;
pub mod graph;
pub mod metrics;
pub mod opt;
pub mod rng;
pub mod scene;
pub mod sim;
pub mod student;
pub mod tape;
pub mod teacher;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
