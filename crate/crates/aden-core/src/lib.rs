//! Adversarial encoder-decoder denoiser for one-dimensional signals.
//!
//! The crate bundles a small reverse-mode autodiff core over rank-3
//! arrays, dilated convolution/deconvolution operators, a residual
//! encoder-decoder with a latent discriminator, AdaDelta training with
//! an adversarial objective, and synthetic-signal / CSV tooling for
//! evaluation. The `aden` binary exposes the batch workflow
//! (`gen`, `train`, `denoise`, `eval`, `gradcheck`).

pub mod checkpoint;
pub mod conv;
pub mod io;
pub mod model;
pub mod optim;
pub mod pca;
pub mod signal;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
