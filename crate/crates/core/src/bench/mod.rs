//! Metrics, closed-loop rollouts, experiment harness, and report output.

mod experiment;
mod metrics;
mod svg;

pub use experiment::{
    read_report, run_experiment, summarize, summary_markdown, ControllerKind, ExperimentConfig, Report, ReportRow, RunRecord,
    SummaryRow,
};
pub use metrics::{closed_loop, compute_metrics, Metrics, Trajectory};
pub use svg::{emit_svg_timeseries, render_svg};
