//! Metrics, the automated interaction protocol, aggregation and reports.

mod aggregate;
mod metrics;
mod protocol;
mod report;

pub use aggregate::{aggregate, convergence, ConvergenceReport, RoundAggregate, ThresholdConvergence, DEFAULT_THRESHOLDS};
pub use metrics::{dice, dice_from_iou, iou, iou_dice};
pub use protocol::{
    round_clicks, run_protocol, simulate_point_session, simulate_scribble_session, simulate_session, target_rng,
    EvalRun, PromptMode, ProtocolConfig, RoundMetrics, SkippedTarget, TargetOutcome,
};
pub use report::{
    evaluate, export_report, points_sweep, read_reports, refinement_curves_csv, reports_from_json, reports_to_json,
    success_curves_csv, to_csv, EvalReport, ReportFormat,
};
