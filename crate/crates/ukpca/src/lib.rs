//! Command-line front end for `ukpca-core`: CSV and JSON formats, experiment
//! configuration, convergence sweeps and the `verify` check suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod theory;
pub mod verify;

pub use error::{CliError, Result};
