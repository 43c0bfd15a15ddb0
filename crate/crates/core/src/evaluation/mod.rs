//! Per-tag precision/recall/F1, category averaging and the comparison tables.

mod render;
mod report;

pub use render::{parse_comparison_csv, render_comparison, render_report_csv, Comparison};
pub use report::{
    average_reports, span_prf, token_prf, weighted_f1, EvalReport, Level, TagMetrics,
};
