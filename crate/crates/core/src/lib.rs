//! Attentive convolutional-recurrent text classifiers for grading harm severity
//! in clinical incident narratives.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`autodiff`]: a tape-based reverse-mode differentiation engine over dense
//!   row-major `f64` tensors, plus a central-difference gradient checker.
//! - [`layers`]: embedding lookup, multi-width 1-D convolution, max pooling,
//!   LSTM/GRU cells, (bi)directional recurrence, soft attention, dense layers.
//! - [`model`]: the ten classifier variants (CNN, LSTM, `{GRU,LSTM,Bi-GRU,Bi-LSTM}`-CNN
//!   and their attentive counterparts) behind one [`model::HarmClassifier`].
//! - [`training`]: Adam, elementwise gradient clipping, mini-batching, early stopping
//!   and the stratified 60/20/20 split.
//! - [`data`]: whitespace tokenizer, vocabulary, pad/crop encoding, severity label
//!   schemas and a seeded synthetic narrative generator.
//! - [`baselines`]: multinomial naive Bayes and a hinge-loss linear model over n-gram counts.
//! - [`metrics`]: confusion counts, precision/recall/F-1, ROC-AUC and per-category reports.
//!
//! File formats and the command-line interface live in the `harmnet` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod data;
mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{Error, Result};
