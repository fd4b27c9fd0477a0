//! Play-style discovery for multiplayer match telemetry.
//!
//! Pipeline: [`ingest`] parses and encodes match logs, [`regress`] fits the
//! global and per-player regressions, [`dpcluster`] clusters the per-player
//! coefficient vectors with a Dirichlet-process Gibbs sampler, and
//! [`analyze`] turns the sampler output into fit metrics and reports.
//! [`synth`] generates logs with planted styles for end-to-end checks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod dpcluster;
pub mod error;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod regress;
pub mod synth;

pub use error::{Error, Result};
