//! Learning from noisy labels with a distance-based classifier whose class
//! centers are regularized by a physics-style potential energy.
//!
//! Samples are scored by Gaussian kernels of their feature-space distances to
//! learnable class centers (a mixture-model posterior). Three ingredients make
//! the training robust to corrupted labels:
//!
//! - a composite classifier loss, cross entropy plus reverse cross entropy;
//! - a potential-energy loss on every pair of class centers (origin included)
//!   that settles the centers into a co-stable, equal-distance layout;
//! - the bounded center geometry that layout implies, which acts as an
//!   implicit early-stopping mechanism against memorizing noise.
//!
//! Module map:
//!
//! - [`tensor`]: dense f64 tensors and the shared linear-algebra kernels
//! - [`autodiff`]: recorded-tape reverse-mode gradients + finite-difference checks
//! - [`energy`]: the potential-energy curve, center-pair loss, and dynamics simulator
//! - [`head`]: feature normalization, kernel distances, posteriors, prediction
//! - [`losses`]: CE / RCE / composite / GCE losses and total-loss assembly
//! - [`model`]: the MLP feature extractor
//! - [`noise`]: seeded symmetric and asymmetric label corruption
//! - [`data`]: Gaussian-blob generation, CIFAR-10 binary and CSV ingestion
//! - [`trainer`]: the mini-batch SGD training loop and evaluation
//! - [`verify`]: the built-in verification battery
//! - [`cli`]: experiment configuration and the command entry points
//!
//! See the `examples/` directory for one runnable walkthrough per capability,
//! and the `pemm` binary for the `train` / `noise` / `centersim` / `verify`
//! commands.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod energy;
mod error;
pub mod head;
pub mod losses;
pub mod model;
pub mod noise;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
