//! Scenario-driven command-line front end for the `mosco_lab` library.

pub mod config;
pub mod error;
pub mod run;
pub mod scenario;

pub use config::{Experiment, ScenarioConfig};
pub use error::{CliError, FailureRecord};
pub use run::{run, sweep, Overrides, RunManifest};
