//! Scenario files, a runner that checks their expectations, and CSV/SVG/JSON output.

pub mod builtins;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod sweep;

pub use config::ScenarioConfig;
pub use error::{CliError, Result};
pub use runner::{execute, run_scenario, RunOptions, RunSummary};
pub use sweep::{sweep, SweepTable};
