//! Instance I/O, experiment commands, and CSV reporting.

pub mod experiments;
pub mod format;
pub mod report;

pub use experiments::{
    compare_methods, count_nacs, enumerate_revisions, solve_one, vams_sweep, CompareOutput,
    EnumerationOutput, ExperimentConfig, HarnessError, Method, NacCountReport, ProblemSpec,
    SweepOutput, ENUMERATION_GUARD,
};
pub use format::{FormatError, InstanceFile};
pub use report::{config_hash, write_iteration_log, write_iteration_log_path, write_rows, write_rows_path, ReportRow};
