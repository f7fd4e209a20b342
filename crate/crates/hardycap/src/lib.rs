//! Scenario-driven front end for `hardycap-core`: TOML scenarios, JSON
//! reports, CSV tables and SVG plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod report;
pub mod run;
pub mod scenario;
pub mod svg;

pub use run::{run, run_path, Options, RunError, Subcommand};
pub use scenario::{parse_scenario, Scenario, ScenarioError};
