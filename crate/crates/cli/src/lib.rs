//! Scenario runner: reads a TOML scenario, drives simulation, estimation and
//! analysis, and writes plot-ready tables plus a run manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{Needs, ScenarioConfig};
pub use error::{CliError, CliResult};
pub use output::{OutputFormat, Outputs, Stamp};
pub use runner::{RunReport, Scenario};
