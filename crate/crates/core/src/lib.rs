//! Online meta-learned, layer-wise learning rates for fine-tuning.
//!
//! Each named layer of a model gets its own SGD step size. Every iteration
//! takes a provisional step on a training batch, measures how the loss on a
//! validation batch responds to each layer's step size, nudges the step
//! sizes along that hypergradient and then takes the real step. Layers whose
//! pretrained weights already suit the target task tend to end up with small
//! rates, layers that must adapt with larger ones.
//!
//! Modules:
//!
//! - [`tensor`]: dense tensors, losses, gradient snapshots and the
//!   finite-difference oracle
//! - [`nn`]: small MLP/CNN models with named parameter groups
//! - [`optimizer`]: the online learning-rate update and training loop
//! - [`baselines`]: fixed-rate fine-tuning schemes
//! - [`data`]: datasets, batch streams and the synthetic transfer task
//! - [`harness`]: configs, the pretrain → fine-tune pipeline, ablations,
//!   the grid-search bi-level oracle and report files

pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod optimizer;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
