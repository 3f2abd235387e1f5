//! Two-stream video anomaly detection engine.
//!
//! The knowledge-retrieval stream hashes event features with a trainable
//! encoder ([`hash`], [`train`]) into a bucketed knowledge base ([`kb`]).
//! The context-recovery stream scores frames by the maximum local error of
//! their prediction error maps ([`context`]). [`eval`] normalizes, smooths
//! and fuses both streams and computes AUC metrics; [`pipeline`] ties the
//! pieces into the `tsvad` command line tool.

pub mod context;
pub mod error;
pub mod eval;
pub mod hash;
pub mod kb;
pub mod pipeline;
pub mod train;

mod binio;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
