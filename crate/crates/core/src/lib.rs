//! Simulator of Stark-controlled atomic-frequency-comb spin-wave memories.
//!
//! Discrete ion ensembles split into two electrically inequivalent classes
//! are driven through optical, electric and spin-transfer pulse timelines.
//! The crate predicts coherent echo and FID emission, quantifies coherent
//! noise suppression and estimates incoherent fluorescence budgets.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod output;
pub mod sequence;
pub mod stark;

pub use error::{Error, Result};
