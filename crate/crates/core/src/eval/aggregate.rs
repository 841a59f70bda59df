use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::protocol::RoundMetrics;
use crate::error::{Error, Result};

/// Dice cutoffs of the usual convergence table.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.75, 0.85, 0.90];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAggregate {
    pub round: usize,
    /// Mean over all target records.
    pub m_iou: f64,
    pub m_dice: f64,
    /// Mean over classes of the per-class means.
    pub c_iou: f64,
    pub c_dice: f64,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-round sample-average and class-average IoU and Dice. Every record
/// must cover the same number of rounds.
pub fn aggregate(results: &[RoundMetrics]) -> Result<Vec<RoundAggregate>> {
    let Some(first) = results.first() else {
        return Err(Error::invalid("no evaluated targets to aggregate"));
    };
    let rounds = first.dice.len();
    if let Some(bad) = results.iter().find(|r| r.dice.len() != rounds || r.iou.len() != rounds) {
        return Err(Error::invalid(format!(
            "record {}/{} has {} rounds, expected {rounds}",
            bad.sample_id,
            bad.class,
            bad.dice.len()
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&RoundMetrics>> = BTreeMap::new();
    for r in results {
        by_class.entry(r.class.as_str()).or_default().push(r);
    }
    Ok((0..rounds)
        .map(|t| RoundAggregate {
            round: t,
            m_iou: mean(results.iter().map(|r| r.iou[t])),
            m_dice: mean(results.iter().map(|r| r.dice[t])),
            c_iou: mean(by_class.values().map(|rs| mean(rs.iter().map(|r| r.iou[t])))),
            c_dice: mean(by_class.values().map(|rs| mean(rs.iter().map(|r| r.dice[t])))),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConvergence {
    pub threshold: f64,
    /// Percentage of targets reaching the threshold within the budget.
    pub success_pct: f64,
    /// Mean first round reaching the threshold, over successful targets only.
    pub mean_rounds: Option<f64>,
    /// Percentage of targets that reached the threshold by each round.
    pub cumulative_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Rounds considered, R0 included.
    pub budget: usize,
    pub targets: usize,
    pub thresholds: Vec<ThresholdConvergence>,
}

/// Convergence efficiency over the first `budget` rounds of each record;
/// records shorter than the budget hold their last value.
pub fn convergence(results: &[RoundMetrics], thresholds: &[f64], budget: usize) -> Result<ConvergenceReport> {
    if thresholds.is_empty() {
        return Err(Error::invalid("no convergence thresholds given"));
    }
    if budget == 0 {
        return Err(Error::invalid("convergence budget must be at least one round"));
    }
    let n = results.len();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let thresholds = thresholds
        .iter()
        .map(|&th| {
            let first: Vec<Option<usize>> = results
                .iter()
                .map(|r| {
                    (0..budget).find(|&t| r.dice.get(t).or(r.dice.last()).is_some_and(|&d| d >= th))
                })
                .collect();
            let hits: Vec<usize> = first.iter().flatten().copied().collect();
            ThresholdConvergence {
                threshold: th,
                success_pct: pct(hits.len()),
                mean_rounds: (!hits.is_empty()).then(|| mean(hits.iter().map(|&t| t as f64))),
                cumulative_pct: (0..budget)
                    .map(|t| pct(hits.iter().filter(|&&h| h <= t).count()))
                    .collect(),
            }
        })
        .collect();
    Ok(ConvergenceReport {
        budget,
        targets: n,
        thresholds,
    })
}
