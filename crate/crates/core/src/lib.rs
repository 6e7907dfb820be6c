//! Semi-supervised self-training for well-log classification.
//!
//! A two-layer neural classifier is trained on a small expert-labelled set,
//! then repeatedly labels the unlabelled pool, admits its most confident
//! predictions as pseudo-labels, rebalances and retrains. Baseline
//! classifiers and a cross-validation harness produce the comparison tables.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod mlp;
pub mod report;
pub mod rng;
pub mod selftrain;
pub mod synthgen;

pub use dataset::{ClassLabel, CsvSchema, Dataset, LabelSet, NormParams, Sample};
pub use error::{Error, Result};
pub use mlp::{MlpConfig, MlpModel, Posterior, TrainTrace};
