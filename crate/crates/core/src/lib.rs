//! Noisy-label-robust training laboratory.
//!
//! Trains a small cosine-margin embedding network on a synthetic
//! speaker-verification corpus with injected symmetric label noise, and
//! selects clean samples with an OR-Gate over per-epoch top-k predictions
//! after a short phase of training on everything. A moving-average
//! (self-ensemble) selector and the usual ablations are included for
//! comparison, along with EER and selection precision/recall metrics.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod plan;
pub mod selector;
pub mod textio;
pub mod trainer;

pub use error::{Error, Result};
