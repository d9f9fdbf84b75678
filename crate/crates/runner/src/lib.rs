//! Experiment orchestration on top of `debias-core`: JSON run configs,
//! multi-seed runs, γ / T_bias sweeps, the enumeration oracle report and
//! the CSV / JSON artifacts the `debias` binary writes.

pub mod artifacts;
pub mod config;
pub mod experiment;
pub mod oracle;
pub mod output;
pub mod report;
pub mod sweep;

pub use config::{DataSpec, RunConfig, RUN_SCHEMA_VERSION};
pub use experiment::{run_experiment, MeanStd, Summary};
pub use oracle::{oracle_check, OracleCounts, OracleReport};
pub use sweep::{run_sweep, SweepAxis};
