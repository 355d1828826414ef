//! Hybrid quantum-classical regression for drug-response prediction.
//!
//! A gene-expression profile passes through an MLP encoder, a bounded
//! normalization onto rotation angles, and a layered parameterized circuit
//! simulated exactly on a dense statevector. The crate also carries the
//! training loop, preprocessing and split machinery, AUC evaluation and the
//! experiment driver used by the `qhybrid` command-line tool.

pub mod angle;
pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;
pub mod normalization;
pub mod seeds;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
