//! Sweeps of a family across decreasing `ell` (or growing torus height), rate
//! fits, and classification of the limiting connecting curves.

mod config;
mod report;
mod sweep;

pub use config::{AnalysisParams, ExperimentConfig, GridPolicy, Ladder};
pub use report::{fit_log_log, fit_rate, thresholds, threshold_report, Classification, RateFit, ThresholdReport, TrendStatistics};
pub use sweep::{
    csv_columns, read_records_csv, run_sweep, write_records_csv, ExperimentRecord, SweepOutcome, EXTENSION_LENGTHS,
    THREADS_ENV,
};
