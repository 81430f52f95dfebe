//! Config-driven experiment runs with CSV/JSON outputs and a hashed manifest.

pub mod config;
pub mod plotdata;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Task, Tolerances, SCHEMA_VERSION};
pub use run::{exit_code, run, Failure, OutputFile, RunManifest, RunOutcome};
