//! Configuration, experiment drivers and result emission for robust CBF
//! verification and synthesis.

pub mod checks;
pub mod config;
pub mod drivers;
pub mod emit;

pub use config::{load_config, parse_config, ConfigError, JobConfig};
pub use drivers::{run_selection, run_synthesis, run_verify, run_verify_sweep, ResultBundle, RunError};
pub use emit::emit_results;
