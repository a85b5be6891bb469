//! Desk-scale laboratory for probabilistic time-series transformers.
//!
//! The crate trains decoder-only transformers with a Student's-t output head
//! on synthetic or CSV time-series corpora, logs every run as JSON lines, and
//! fits power laws (plain, broken, and offset) to the minima of those logs.
//! Everything is seeded and single-threaded per run, so identical inputs
//! reproduce identical artifacts byte for byte.
//!
//! Module map:
//! - [`tensor`]: reverse-mode autodiff over flat `f64` tensors.
//! - [`model`]: the transformer, its Student's-t head, checkpoints, and
//!   autoregressive forecasting.
//! - [`data`]: corpus construction, normalization, splits, window sampling,
//!   and diversity-preserving dataset scaling.
//! - [`metrics`]: Student's-t log-density, CRPS (closed form and quadrature),
//!   and the differentiable training loss.
//! - [`train`]: AdamW, the warmup+cosine schedule, the training loop, and
//!   exact compute accounting.
//! - [`scaling`]: power-law fits, compute frontiers, and optimal-LR fits.
//! - [`cli`]: the `ltmlab` command-line interface.

pub mod cli;
pub mod data;
pub mod metrics;
pub mod model;
pub mod scaling;
pub mod tensor;
pub mod train;
pub mod util;
