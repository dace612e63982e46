//! Experiment configs, parallel sweeps and summary reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{builtin_instance, load_experiment, ExperimentConfig, InstanceRef, ProbeConfig, ResolvedExperiment};
pub use report::{build_report, Report, ReportRow, REPORT_CSV_HEADER};
pub use run::{
    bound_for, build_probes, output_dir, run_experiment, trace_file_name, write_atomic, BoundValue, CellResult,
    ErrorKind, FitEntry, HorizonSummary, Stats, Summary, PLOT_DATA_FILE, PLOT_DATA_HEADER, SUMMARY_FILE,
};
