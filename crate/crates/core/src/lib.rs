//! Vector-quantized autoencoders whose codebook is fitted by optimal transport, built from scratch.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: a small reverse-mode autodiff tape over dense `f64` arrays, Adam, and a
//!   finite-difference gradient checker.
//! - [`ot`]: exact (transportation simplex), entropic (log-domain Sinkhorn) and entropic
//!   semi-dual optimal transport.
//! - [`vq`]: codebooks, nearest-codeword quantization with a straight-through copy, codeword
//!   weights, and usage/perplexity metrics.
//! - [`models`]: MLP encoder/decoder, the VQ-VAE and VQ-WAE objectives, the alternating
//!   training loop, evaluation and checkpoints.
//! - [`data`]: seeded synthetic mixtures, an IDX (MNIST) loader and mini-batching.
//! - [`expcli`]: configuration, experiment orchestration, CSV metrics, SVG charts and the
//!   OT benchmark behind the `otvq` binary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod diffcore;
pub mod error;
pub mod expcli;
pub mod models;
pub mod ot;
pub mod vq;

pub use error::{ConfigError, Error, Result};
