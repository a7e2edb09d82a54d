//! Experiment harness: configuration, ensembles, named experiments, output
//! files and the command line.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod experiments;
pub mod kernel_suite;
pub mod output;

pub use config::{epoch_steps, Budget, ExperimentConfig, InitialProfile, Sampling};
pub use ensemble::{run_ensemble, worker_pool, Ensemble, EnsembleSpec, EnsembleSummary, Exclusion};
pub use experiments::*;
pub use kernel_suite::{random_field, run_kernel_suite, Check, KernelSuiteReport};
pub use output::{Format, Manifest, OutputDir, SeriesRow, SCHEMA_VERSION};
