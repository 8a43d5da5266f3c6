//! Core algorithms for studying how much label information a sequence
//! model's hidden representations carry and what that costs in task
//! performance.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required). File formats, the sweep
//! runner and the command-line front end live in the `pprobe` crate.
//!
//! Module map:
//!
//! - [`autodiff`]: define-by-run reverse-mode differentiation, the
//!   gradient-multiply layer, optimizers and a finite-difference checker.
//! - [`models`]: LSTM encoder/decoder with additive attention, an LSTM
//!   language model and the MLP probe.
//! - [`data`]: synthetic tagged-corpus generation, vocabularies, batching.
//! - [`metrics`]: BLEU, label entropy, probe conditional entropy, mutual
//!   information.
//! - [`pareto`]: dominance tests and frontier extraction.
//! - [`trainer`]: scalarized joint training, probe retraining, the
//!   checkpoint-sampling baseline and window statistics.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod checkpoint;
pub mod data;
mod error;
pub(crate) mod math;
pub mod metrics;
pub mod models;
pub mod pareto;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
