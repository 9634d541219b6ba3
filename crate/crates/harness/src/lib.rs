//! Experiment plumbing around `ldplab-core`: dataset loading and synthesis,
//! seeded budget sweeps, closed-form variance tables and batch location
//! obfuscation. The `ldplab` binary is a thin CLI over these modules.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod geo;
pub mod tables;

pub use dataset::{load_csv, synth_uniform, Dataset, ValueMapping};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, Execution, ExperimentResult, ExperimentSpec, StrategySpec};
pub use geo::geo_sanitize;
pub use tables::{variance_table, TableConfig};
