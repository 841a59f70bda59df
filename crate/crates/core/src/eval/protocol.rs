use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::iou_dice;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::raster::{centroid_in_region, connected_components, interior_depth, BinaryMask, ScribbleMap};
use crate::rng::{hash_str, stream, StreamRng};
use crate::scribble::{corrective_scribbles_with_style, generate_scribble, ErrorMap, GenParams, ScribbleStyle};
use crate::segment::{clicks_to_scribble, Click, Segmenter, SegmenterKind};

/// How prompts are synthesized each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PromptMode {
    Scribble { style: ScribbleStyle },
    /// One click per connected component.
    PointPerComponent,
    /// Up to `k` positive and `k` negative clicks per round.
    PointsPerChannel { k: usize },
}

impl Default for PromptMode {
    fn default() -> Self {
        PromptMode::Scribble {
            style: ScribbleStyle::Adaptive,
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptMode::Scribble { style } => write!(f, "scribble:{}", style.name()),
            PromptMode::PointPerComponent => f.write_str("1pt-cc"),
            PromptMode::PointsPerChannel { k } => write!(f, "{k}pt-ch"),
        }
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    /// `scribble`, `scribble:<style>`, `1pt-cc` or `<k>pt-ch`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "scribble" {
            return Ok(PromptMode::default());
        }
        if let Some(style) = s.strip_prefix("scribble:") {
            return Ok(PromptMode::Scribble { style: style.parse()? });
        }
        if s == "1pt-cc" {
            return Ok(PromptMode::PointPerComponent);
        }
        if let Some(k) = s.strip_suffix("pt-ch") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::invalid(format!("bad point count in prompt mode {s:?}")))?;
            return Ok(PromptMode::PointsPerChannel { k });
        }
        Err(Error::invalid(format!(
            "unknown prompt mode {s:?} (expected scribble[:style], 1pt-cc or <k>pt-ch)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Rounds per target, R0 included.
    pub rounds: usize,
    /// IoU at which a target stops receiving corrections.
    pub tau: f64,
    pub prompt_mode: PromptMode,
    pub seed: u64,
    pub backend: SegmenterKind,
    pub gen: GenParams,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            tau: 0.9,
            prompt_mode: PromptMode::default(),
            seed: 0,
            backend: SegmenterKind::Geodesic,
            gen: GenParams::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if let PromptMode::PointsPerChannel { k: 0 } = self.prompt_mode {
            return Err(Error::invalid("points per channel must be at least 1"));
        }
        self.gen.validate()
    }
}

/// Per-round trace of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub sample_id: String,
    pub class: String,
    pub iou: Vec<f64>,
    pub dice: Vec<f64>,
    /// First round whose IoU reached tau.
    pub stop_round: Option<usize>,
    /// Prompt pixels fed each round (zero after stopping).
    pub prompt_pixels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub sample_id: String,
    pub class: String,
    pub reason: String,
}

/// Result of one target's simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetOutcome {
    Done(RoundMetrics),
    Skipped(SkippedTarget),
}

/// Seed stream of one target, independent of evaluation order.
pub fn target_rng(seed: u64, sample_id: &str, target: usize) -> StreamRng {
    stream(seed, &[hash_str(sample_id), target as u64])
}

/// Clicks for the components of `region`: one per component in descending
/// area order (at most `budget`), then extra clicks at the deepest pixels
/// left, cycling over the same components, until the budget or the region
/// runs out. Each extra click treats earlier clicks as boundary.
fn region_clicks(region: &BinaryMask, budget: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let labels = connected_components(region);
    let ids = labels.ids_by_area_desc();
    let mut comps: Vec<BinaryMask> = ids.iter().map(|&id| labels.component_mask(id)).collect();
    let limit = budget.unwrap_or(comps.len());
    let mut out = Vec::new();
    for c in comps.iter_mut() {
        if out.len() == limit {
            return Ok(out);
        }
        let (x, y) = centroid_in_region(c)?;
        c.set(x, y, false);
        out.push((x, y));
    }
    if budget.is_none() {
        return Ok(out);
    }
    while out.len() < limit {
        let mut placed = false;
        for c in comps.iter_mut() {
            if out.len() == limit {
                break;
            }
            if c.count() == 0 {
                continue;
            }
            let depth = interior_depth(c);
            let mut best: Option<(usize, f64)> = None;
            for (i, &d) in depth.values().iter().enumerate() {
                if c.get_index(i) && best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((i, d));
                }
            }
            let (i, _) = best.expect("non-empty component");
            let (x, y) = (i % c.width(), i / c.width());
            c.set(x, y, false);
            out.push((x, y));
            placed = true;
        }
        if !placed {
            break;
        }
    }
    Ok(out)
}

/// Clicks of one round. Round 0 clicks the target's components; later rounds
/// click qualifying false-negative (positive) and false-positive (negative)
/// components.
pub fn round_clicks(
    mode: PromptMode,
    gt: &BinaryMask,
    pred: Option<&BinaryMask>,
    gen: &GenParams,
) -> Result<Vec<Click>> {
    let budget = match mode {
        PromptMode::PointPerComponent => None,
        PromptMode::PointsPerChannel { k } => Some(k),
        PromptMode::Scribble { .. } => return Err(Error::invalid("scribble mode has no clicks")),
    };
    let (pos, neg) = match pred {
        None => (gt.clone(), BinaryMask::new(gt.width(), gt.height())),
        Some(p) => ErrorMap::new(p, gt)?.qualifying(gen.min_component_area),
    };
    let mut clicks: Vec<Click> = region_clicks(&pos, budget)?
        .into_iter()
        .map(|(x, y)| Click::positive(x, y))
        .collect();
    clicks.extend(region_clicks(&neg, budget)?.into_iter().map(|(x, y)| Click::negative(x, y)));
    Ok(clicks)
}

fn round_prompt<R: Rng>(
    cfg: &ProtocolConfig,
    gt: &BinaryMask,
    pred: Option<&BinaryMask>,
    rng: &mut R,
) -> Result<ScribbleMap> {
    let (w, h) = gt.dims();
    match (cfg.prompt_mode, pred) {
        (PromptMode::Scribble { style }, None) => generate_scribble(gt, style, &cfg.gen, rng),
        (PromptMode::Scribble { style }, Some(p)) => corrective_scribbles_with_style(p, gt, style, &cfg.gen, rng),
        (mode, pred) => clicks_to_scribble(w, h, &round_clicks(mode, gt, pred, &cfg.gen)?),
    }
}

/// Runs the fixed-round protocol on one target. Targets too small to prompt
/// are reported as skipped.
pub fn simulate_session(
    sample: &Sample,
    target: usize,
    cfg: &ProtocolConfig,
    segmenter: &dyn Segmenter,
) -> Result<TargetOutcome> {
    cfg.validate()?;
    let t = sample
        .targets
        .get(target)
        .ok_or_else(|| Error::invalid(format!("sample {} has no target {target}", sample.id)))?;
    let gt = &t.mask;
    let skip = |reason: String| {
        Ok(TargetOutcome::Skipped(SkippedTarget {
            sample_id: sample.id.clone(),
            class: t.class.clone(),
            reason,
        }))
    };
    if gt.count() < cfg.gen.min_component_area {
        return skip(format!(
            "target area {} below minimum {}",
            gt.count(),
            cfg.gen.min_component_area
        ));
    }
    let base = target_rng(cfg.seed, &sample.id, target).gen::<u64>();
    let initial = match round_prompt(cfg, gt, None, &mut stream(base, &[0])) {
        Ok(s) => s,
        Err(e @ (Error::TargetTooSmall { .. } | Error::EmptyRegion)) => return skip(e.to_string()),
        Err(e) => return Err(e),
    };
    let mut session = segmenter.start(&sample.image, Some(gt))?;
    let mut pred = session.step(&initial)?;
    let (i0, d0) = iou_dice(&pred, gt)?;
    let mut m = RoundMetrics {
        sample_id: sample.id.clone(),
        class: t.class.clone(),
        iou: vec![i0],
        dice: vec![d0],
        stop_round: (i0 >= cfg.tau).then_some(0),
        prompt_pixels: vec![initial.count()],
    };
    for r in 1..cfg.rounds {
        if m.stop_round.is_some() {
            m.iou.push(m.iou[r - 1]);
            m.dice.push(m.dice[r - 1]);
            m.prompt_pixels.push(0);
            continue;
        }
        let correction = round_prompt(cfg, gt, Some(&pred), &mut stream(base, &[r as u64]))?;
        pred = session.step(&correction)?;
        let (i, d) = iou_dice(&pred, gt)?;
        m.iou.push(i);
        m.dice.push(d);
        m.prompt_pixels.push(correction.count());
        if i >= cfg.tau {
            m.stop_round = Some(r);
        }
    }
    Ok(TargetOutcome::Done(m))
}

/// Scribble-protocol session; `cfg.prompt_mode` must be a scribble mode.
pub fn simulate_scribble_session(
    sample: &Sample,
    target: usize,
    cfg: &ProtocolConfig,
    segmenter: &dyn Segmenter,
) -> Result<TargetOutcome> {
    if !matches!(cfg.prompt_mode, PromptMode::Scribble { .. }) {
        return Err(Error::invalid("scribble session needs a scribble prompt mode"));
    }
    simulate_session(sample, target, cfg, segmenter)
}

/// Point-protocol session; `cfg.prompt_mode` must be a point mode.
pub fn simulate_point_session(
    sample: &Sample,
    target: usize,
    cfg: &ProtocolConfig,
    segmenter: &dyn Segmenter,
) -> Result<TargetOutcome> {
    if matches!(cfg.prompt_mode, PromptMode::Scribble { .. }) {
        return Err(Error::invalid("point session needs a point prompt mode"));
    }
    simulate_session(sample, target, cfg, segmenter)
}

/// Outcomes of a whole dataset in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub records: Vec<RoundMetrics>,
    pub skipped: Vec<SkippedTarget>,
}

/// Simulates every target of every sample on `workers` threads. Results do
/// not depend on the worker count.
pub fn run_protocol(
    samples: &[Sample],
    cfg: &ProtocolConfig,
    segmenter: &dyn Segmenter,
    workers: usize,
) -> Result<EvalRun> {
    cfg.validate()?;
    if segmenter.kind() != cfg.backend {
        return Err(Error::invalid(format!(
            "configured backend {} but got a {} segmenter",
            cfg.backend,
            segmenter.kind()
        )));
    }
    let jobs: Vec<(usize, usize)> = samples
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.targets.len()).map(move |t| (i, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<TargetOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, t)| simulate_session(&samples[i], t, cfg, segmenter))
            .collect()
    });
    let mut run = EvalRun {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    for o in outcomes {
        match o? {
            TargetOutcome::Done(m) => run.records.push(m),
            TargetOutcome::Skipped(s) => run.skipped.push(s),
        }
    }
    Ok(run)
}
