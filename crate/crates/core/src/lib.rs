//! Minimum discrimination information (MDI) adaptation of backoff n-gram
//! language models.
//!
//! An out-of-domain backoff model is reshaped so that it reproduces a set of
//! in-domain n-gram marginals while staying as close as possible (in
//! conditional KL divergence) to the original. The exponential-family
//! solution is found by generalized iterative scaling, where each iteration
//! costs time linear in the number of model entries plus the number of
//! constraints: normalizers are computed bottom-up along the backoff
//! structure and all marginals are accumulated in a single right-aligned
//! pass over suffix groups.
//!
//! Modules:
//! - [`arpa`]: model type, ARPA reading/writing, backoff lookup, validation.
//! - [`stats`]: corpus counting, constraint selection, history distribution,
//!   a small absolute-discounting estimator.
//! - [`mdi`]: scaling fields, normalizers, marginals, GIS, adapted model.
//! - [`oracle`]: brute-force dense reference implementations.
//! - [`eval`]: perplexity, conditional KL, linear interpolation baseline.
//! - [`pipeline`], [`bench`], [`synth`]: end-to-end drivers used by the CLI.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arpa;
pub mod bench;
mod error;
pub mod eval;
pub mod mdi;
mod ngram;
pub mod oracle;
pub mod pipeline;
pub mod stats;
pub mod synth;
mod sum;

pub use arpa::{parse_arpa, write_arpa, BackoffModel, Entry};
pub use error::{Error, Result};
pub use ngram::{NGram, TokenId, Vocabulary, BOS, EOS, UNK};
pub use stats::{ConstraintSet, CountTable, HistoryDistribution};
