//! File formats, JSON scenarios and the command-line front end around
//! `nonlocal-core`.

pub mod graph_io;
pub mod output;
pub mod run;
pub mod scenario;

pub use nonlocal_core as core;
pub use run::{exit_code, run_batch, run_file, run_scenario, Outcome, Status};
pub use scenario::{load_scenario, parse_scenario, LoadedScenario, Scenario};
