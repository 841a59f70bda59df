//! Two-stage toy training on synthetic shapes.

use serde::{Deserialize, Serialize};

use super::config::LossConfig;
use super::episode::{record_episode_loss, Corrections};
use super::model::{NetGraph, RoundFlags};
use super::optim::{AdamW, AdamWConfig};
use super::params::{ToyNetParams, Trainable};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid};
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;
use crate::scribble::{generate_scribble, GenParams, ScribbleStyle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage: u8,
    pub steps: usize,
    pub optim: AdamWConfig,
    pub loss: LossConfig,
    pub gen: GenParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            steps: 200,
            optim: AdamWConfig::default(),
            loss: LossConfig::default(),
            gen: GenParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: u8,
    /// Episode loss of every step, before that step's update.
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean of a trailing window of the loss trace.
    pub fn smoothed_tail(&self, window: usize) -> f64 {
        let w = window.clamp(1, self.losses.len().max(1));
        let tail = &self.losses[self.losses.len().saturating_sub(w)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Module switches of each stage: stage 1 trains without memory or SGF.
pub fn stage_flags(stage: u8) -> RoundFlags {
    RoundFlags {
        use_sgf: stage >= 2,
        use_memory: stage >= 2,
    }
}

fn pairs(samples: &[Sample]) -> Vec<(&ImageGrid, &BinaryMask)> {
    samples
        .iter()
        .flat_map(|s| s.targets.iter().map(move |t| (&s.image, &t.mask)))
        .collect()
}

/// Trains the stage's parameter set with unrolled oracle-corrected episodes,
/// cycling through `samples`. Each sample keeps the same scribble seeds on
/// every visit, the ones [`evaluate_loss`] uses.
pub fn train_toy<T: Scalar>(params: &mut ToyNetParams<T>, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    let trainable = Trainable::from_stage(cfg.stage)?;
    let flags = stage_flags(cfg.stage);
    let data = pairs(samples);
    if data.is_empty() {
        return Err(Error::invalid("training needs at least one sample"));
    }
    let mut opt = AdamW::new(cfg.optim.clone());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let i = step % data.len();
        let (image, gt) = data[i];
        let s = i as u64;
        let initial = generate_scribble(gt, ScribbleStyle::Adaptive, &cfg.gen, &mut stream(cfg.seed, &[s, 0]))?;
        let grads = {
            let mut net = NetGraph::new(params, trainable);
            let (l, _) = record_episode_loss(
                &mut net,
                image,
                gt,
                &initial,
                Corrections::Oracle {
                    gen: &cfg.gen,
                    seed: derive_seed(cfg.seed, &[s, 1]),
                },
                flags,
                &cfg.loss,
            )?;
            let loss = net.value(l).item().to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            losses.push(loss);
            net.graph.backward(l)?
        };
        opt.step(params, &grads)?;
    }
    Ok(TrainReport {
        stage: cfg.stage,
        losses,
    })
}

/// Mean episode loss over all samples with fixed per-sample scribble seeds.
pub fn evaluate_loss<T: Scalar>(
    params: &ToyNetParams<T>,
    samples: &[Sample],
    flags: RoundFlags,
    loss: &LossConfig,
    gen: &GenParams,
    seed: u64,
) -> Result<f64> {
    let data = pairs(samples);
    if data.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let mut total = 0.0;
    for (i, (image, gt)) in data.iter().enumerate() {
        let i = i as u64;
        let initial = generate_scribble(gt, ScribbleStyle::Adaptive, gen, &mut stream(seed, &[i, 0]))?;
        let mut net = NetGraph::new(params, Trainable::None);
        let (l, _) = record_episode_loss(
            &mut net,
            image,
            gt,
            &initial,
            Corrections::Oracle {
                gen,
                seed: derive_seed(seed, &[i, 1]),
            },
            flags,
            loss,
        )?;
        total += net.value(l).item().to_f64_lossy();
    }
    Ok(total / data.len() as f64)
}
