//! Instrumented two-layer LSTM language model and the analysis toolkit used
//! to locate number units, short-range number codes and syntax units in it.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, plotting,
//! parallel execution and the command line live in the `agreelab` crate.
//!
//! Module map:
//!
//! * [`grammar`]: agreement stimuli, the syntactic-depth dataset and the
//!   synthetic training corpus.
//! * [`lstm`]: the model, gate-level traces, ablation masks and BPTT training.
//! * [`agreement`]: likelihood-comparison scoring, ablation sweeps and
//!   permutation tests over random equi-size ablations.
//! * [`decoding`]: AUC, linear probes, generalization-across-time decoding and
//!   depth regression with nested cross-validation.
//! * [`connectivity`]: efferent segregation, effective afferent weights and
//!   the mutual-inhibition check.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agreement;
pub mod connectivity;
pub mod decoding;
mod error;
pub mod exec;
pub mod grammar;
pub mod lstm;
pub mod math;
pub mod rng;
pub mod stats;
pub mod vocab;

pub use error::{Error, Result};
