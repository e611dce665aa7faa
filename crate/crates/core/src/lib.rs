//! Continual learning for streaming regression.
//!
//! Samples flow through a preprocessing stage into a set of model blocks (one
//! autoencoder plus one predictor per target). Each block scores samples,
//! sorts them into novelty and familiarity buffers, and proposes an update
//! when its novelty buffer fills. Updates run under a pluggable strategy and
//! wait for an accept/reject decision before they replace the live weights.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod metrics;
pub mod nn;
pub mod novelty;
pub mod orchestrator;
pub mod preprocess;
pub mod sample;
pub mod strategies;
pub mod streams;

pub use error::{Error, Result};
pub use sample::{RawSample, Sample};
