//! Label-free knowledge integration.
//!
//! Several teacher classifiers, each trained on its own disjoint slice of a
//! global label set, are merged into one student over the union of labels
//! without reading any ground-truth labels of the transfer data. Supervision
//! is synthesised from Monte-Carlo Dropout uncertainty: each teacher's
//! averaged prediction is scored by its normalised entropy, and the targets
//! either take the most confident teacher (`hard`) or a confidence-weighted
//! mixture (`soft`), with each instance weighted by the gap between the two
//! highest confidences.
//!
//! Module map:
//!
//! * [`math`]: distributions, the MLP, optimizers, RNG streams, checkpoints
//! * [`data`]: label spaces, datasets, feature hashing, synthetic corpora
//! * [`teacher`]: frozen subset classifiers and MC-Dropout inference
//! * [`integration`]: uncertainty reports, target synthesis and baselines
//! * [`student`]: student training, accuracy and span-F1 evaluation
//! * [`harness`]: experiment configs, diagnostics and the end-to-end runner

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod harness;
pub mod integration;
pub mod math;
pub mod student;
pub mod teacher;

pub use error::{Error, Result};
pub use math::{Distribution, MlpModel, RngStream};
