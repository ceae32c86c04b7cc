//! Seeded Monte-Carlo sweeps, the SoS scaling study and the command-line
//! front end.
//!
//! Every trial derives its randomness from the master seed and its position
//! in the sweep, so outputs are byte-identical across reruns and thread
//! counts as long as wall-clock timing is off.

pub mod cli;
pub mod config;
pub mod output;
pub mod sos_scaling;
pub mod sweep;

pub use cli::{cli_main, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL};
pub use config::{default_threshold, Method, Model, OutputFormat, SweepConfig};
pub use output::{sos_to_json, sweep_bytes, sweep_to_csv, sweep_to_json, CSV_COLUMNS, SCHEMA_VERSION};
pub use sos_scaling::{median_values, run_sos_scaling, sos_gap, GapParts, SosRecord, SosScalingConfig};
pub use sweep::{
    non_increasing_trend, resolve_threads, run_phase_sweep, CellAggregate, SweepOutput, TrialRecord, THREADS_ENV,
};
