use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{check_prompt, SegmentSession, Segmenter, SegmenterKind};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Fidelity of each round in `[0, 1]`, non-decreasing; later rounds
    /// repeat the last entry.
    pub schedule: Vec<f64>,
    pub seed: u64,
    /// Corruption patches applied at fidelity 0.
    pub patches: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            schedule: vec![0.7, 0.9, 1.0],
            seed: 0,
            patches: 8,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::invalid("oracle schedule is empty"));
        }
        if self.schedule.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("oracle fidelities must lie in [0, 1]"));
        }
        if self.schedule.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("oracle fidelities must be non-decreasing"));
        }
        Ok(())
    }

    pub fn fidelity(&self, round: usize) -> f64 {
        self.schedule[round.min(self.schedule.len() - 1)]
    }
}

/// Ground truth corrupted by the first `k` of a fixed, seeded list of disc
/// patches centred on the boundary, where `k` grows as fidelity drops. An
/// erosion patch clears target pixels, a dilation patch sets background
/// pixels. Lower fidelity flips a superset of pixels, so Dice against `gt`
/// never rises as fidelity falls; fidelity 1 returns `gt` itself.
pub fn oracle_segment(gt: &BinaryMask, round: usize, params: &OracleParams) -> Result<BinaryMask> {
    params.validate()?;
    let f = params.fidelity(round);
    let k = ((1.0 - f) * params.patches as f64 - 1e-9).ceil().max(0.0) as usize;
    let area = gt.count();
    if k == 0 || area == 0 {
        return Ok(gt.clone());
    }
    let (w, h) = gt.dims();
    let boundary: Vec<(usize, usize)> = gt
        .pixels()
        .filter(|&(x, y)| {
            let (x, y) = (x as i64, y as i64);
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|(dx, dy)| !gt.get_signed(x + dx, y + dy))
        })
        .collect();
    let radius = ((area as f64).sqrt() / 4.0).round().max(1.0);
    let mut rng = stream(params.seed, &[0x0dac1e]);
    let patches: Vec<((usize, usize), bool)> = (0..params.patches)
        .map(|_| {
            let c = *boundary.choose(&mut rng).expect("non-empty mask has a boundary");
            (c, rng.gen_bool(0.5))
        })
        .collect();
    let mut out = gt.clone();
    for &((cx, cy), erode) in &patches[..k.min(patches.len())] {
        let r = radius as i64;
        for y in (cy as i64 - r).max(0)..=(cy as i64 + r).min(h as i64 - 1) {
            for x in (cx as i64 - r).max(0)..=(cx as i64 + r).min(w as i64 - 1) {
                let (dx, dy) = ((x - cx as i64) as f64, (y - cy as i64) as f64);
                if dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let (ux, uy) = (x as usize, y as usize);
                if gt.get(ux, uy) == erode {
                    out.set(ux, uy, !erode);
                }
            }
        }
    }
    Ok(out)
}

/// Ground-truth-driven backend following a fidelity schedule; prompts only
/// advance the round counter.
#[derive(Debug, Clone, Default)]
pub struct OracleSegmenter {
    pub params: OracleParams,
}

impl OracleSegmenter {
    pub fn new(params: OracleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

struct OracleSession {
    gt: BinaryMask,
    params: OracleParams,
    acc: ScribbleMap,
    round: usize,
}

impl Segmenter for OracleSegmenter {
    fn kind(&self) -> SegmenterKind {
        SegmenterKind::Oracle
    }

    fn start(&self, image: &ImageGrid, gt: Option<&BinaryMask>) -> Result<Box<dyn SegmentSession>> {
        let gt = gt.ok_or_else(|| Error::invalid("the oracle backend needs a ground-truth mask"))?;
        if gt.dims() != image.dims() {
            return Err(Error::DimensionMismatch {
                expected: image.dims(),
                actual: gt.dims(),
            });
        }
        let (w, h) = image.dims();
        Ok(Box::new(OracleSession {
            gt: gt.clone(),
            params: self.params.clone(),
            acc: ScribbleMap::empty(w, h),
            round: 0,
        }))
    }
}

impl SegmentSession for OracleSession {
    fn step(&mut self, prompt: &ScribbleMap) -> Result<BinaryMask> {
        check_prompt(self.gt.dims(), prompt)?;
        let mask = oracle_segment(&self.gt, self.round, &self.params)?;
        self.acc = self.acc.channel_max(prompt)?;
        self.round += 1;
        Ok(mask)
    }

    fn round(&self) -> usize {
        self.round
    }

    fn accumulated(&self) -> &ScribbleMap {
        &self.acc
    }
}
