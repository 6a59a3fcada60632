//! Command-line harness around `ndtomo`: configs, simulations,
//! reconstructions, comparisons, plot data and sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod plotdata;
pub mod reconstruct;
pub mod report;
pub mod simulate;
pub mod sweep;
pub mod table;

pub use error::{CliError, CliResult};
