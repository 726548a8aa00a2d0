//! Statistics over per-row results: distribution summaries, per-chip
//! tables and the device-model consistency checker.

mod consistency;
mod report;
mod stats;

use thiserror::Error;

pub use consistency::{check_consistency, ConsistencyReport, Finding, InconsistencyCode, Verdict};
pub use report::{plot_csv, table_report, ChipRow, ChipSummary, TableKind, TableReport};
pub use stats::{geomean_difference, mean, pair_difference, summarize, DifferenceConvention, DistributionSummary};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no values to summarize")]
    Empty,
    #[error("value {0} must be positive")]
    NonPositive(f64),
    #[error("difference {0} is negative; the geometric mean is undefined")]
    NegativeDifference(f64),
    #[error("chip {0} has no usable values for this table")]
    MissingData(String),
}
