//! Experiment harness for the ISAC sensing-error library: JSON experiment
//! specs, sweep and benchmark drivers, and CSV result files.

pub mod error;
pub mod experiments;
pub mod rows;
pub mod seeds;
pub mod spec;

pub use error::{BenchError, Result};
pub use experiments::{
    run, run_bench, run_evaluate, run_optimize, run_sweep_ld, run_sweep_snr, run_tradeoff, ExperimentOutput,
    RunMeta,
};
pub use rows::{read_rows, write_rows, ResultRow, CSV_HEADER};
pub use spec::{load_spec, save_spec, ExperimentKind, ExperimentSpec};
