use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, convergence, ConvergenceReport, RoundAggregate, DEFAULT_THRESHOLDS};
use super::protocol::{run_protocol, PromptMode, ProtocolConfig, RoundMetrics, SkippedTarget};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::segment::Segmenter;

/// Full result of one evaluated method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Configuration echo (seed, backend, tau, rounds, prompts).
    pub config: ProtocolConfig,
    pub evaluated: usize,
    pub skipped: Vec<SkippedTarget>,
    pub rounds: Vec<RoundAggregate>,
    pub convergence: ConvergenceReport,
    pub records: Vec<RoundMetrics>,
}

/// Runs the protocol over `samples` and summarizes it.
pub fn evaluate(
    method: impl Into<String>,
    samples: &[Sample],
    cfg: &ProtocolConfig,
    segmenter: &dyn Segmenter,
    workers: usize,
) -> Result<EvalReport> {
    let run = run_protocol(samples, cfg, segmenter, workers)?;
    let rounds = aggregate(&run.records)?;
    let convergence = convergence(&run.records, &DEFAULT_THRESHOLDS, cfg.rounds)?;
    Ok(EvalReport {
        method: method.into(),
        config: cfg.clone(),
        evaluated: run.records.len(),
        skipped: run.skipped,
        rounds,
        convergence,
        records: run.records,
    })
}

/// One report per click density, each with `k` positive and `k` negative
/// clicks per round.
pub fn points_sweep(
    samples: &[Sample],
    base: &ProtocolConfig,
    densities: &[usize],
    segmenter: &dyn Segmenter,
    workers: usize,
) -> Result<Vec<EvalReport>> {
    if densities.is_empty() {
        return Err(Error::invalid("no point densities given"));
    }
    densities
        .iter()
        .map(|&k| {
            let cfg = ProtocolConfig {
                prompt_mode: PromptMode::PointsPerChannel { k },
                ..base.clone()
            };
            evaluate(format!("{}/{k}pt-ch", base.backend), samples, &cfg, segmenter, workers)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::invalid(format!("unknown report format {s:?} (expected json or csv)"))),
        }
    }
}

/// Long-format table `method,round,metric,value` with values in percent at
/// two decimals.
pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,round,metric,value\n");
    for r in reports {
        for a in &r.rounds {
            for (name, v) in [("mIoU", a.m_iou), ("mDice", a.m_dice), ("cIoU", a.c_iou), ("cDice", a.c_dice)] {
                let _ = writeln!(out, "{},R{},{name},{:.2}", r.method, a.round, 100.0 * v);
            }
        }
    }
    out
}

/// Refinement curves: `method,round,mIoU,mDice` per round, in percent.
pub fn refinement_curves_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,round,mIoU,mDice\n");
    for r in reports {
        for a in &r.rounds {
            let _ = writeln!(out, "{},{},{:.2},{:.2}", r.method, a.round, 100.0 * a.m_iou, 100.0 * a.m_dice);
        }
    }
    out
}

/// Success curves: `method,threshold,round,cumulative_pct`.
pub fn success_curves_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,threshold,round,cumulative_pct\n");
    for r in reports {
        for t in &r.convergence.thresholds {
            for (round, p) in t.cumulative_pct.iter().enumerate() {
                let _ = writeln!(out, "{},{:.2},{round},{p:.2}", r.method, t.threshold);
            }
        }
    }
    out
}

pub fn reports_to_json(reports: &[EvalReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn reports_from_json(s: &str) -> Result<Vec<EvalReport>> {
    Ok(serde_json::from_str(s)?)
}

/// Writes reports as a JSON array or as long-format CSV.
pub fn export_report(reports: &[EvalReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => reports_to_json(reports)?,
        ReportFormat::Csv => to_csv(reports),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    reports_from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
