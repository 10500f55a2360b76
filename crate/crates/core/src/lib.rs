//! Robustness evaluation for binary text classifiers under confounding by
//! provenance.
//!
//! The crate builds train/test splits whose provenance-conditional label
//! distribution is shifted in a controlled way, trains plain and
//! backdoor-adjusted logistic regression models on binary unigram or
//! precomputed embedding features, and summarises how AUPRC degrades as the
//! shift grows.
//!
//! Modules, bottom-up:
//!
//! * [`corpus`]: records, ingestion, tokenization, vocabulary and embeddings.
//! * [`sampler`]: shift settings, integer cell plans and seeded disjoint draws.
//! * [`model`]: L2-regularized logistic regression with provenance columns.
//! * [`metrics`]: precision-recall curves, average precision, slope fits.
//! * [`synth`]: a two-source generative corpus with a closed-form Bayes scorer.
//! * [`runner`]: grid enumeration, sweeps, aggregation and report files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod runner;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
