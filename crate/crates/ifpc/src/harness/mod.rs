//! Scenario configuration, closed-loop runs, ablations and their outputs.

pub mod config;
pub mod disturbance;
pub mod log;
pub mod output;
pub mod run;
pub mod trajectory;

pub use config::{load_scenario, parse_scenario, Scenario, ScenarioConfig};
pub use log::{compute_metrics, RunLog, RunMetrics};
pub use run::{run_closed_loop, run_prepared, RunOptions, RunOutput};
