//! Unrolled multi-round episodes for training and gradient checking.

use serde::{Deserialize, Serialize};

use super::config::LossConfig;
use super::graph::NodeId;
use super::loss::record_multi_round_loss;
use super::model::{binarize_logits, NetGraph, RoundFlags, RoundPrompt};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::scribble::{corrective_scribbles, GenParams};

/// Prompts and previous-round masks of an episode. Fixing them turns the
/// episode loss into a smooth function of the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutPlan {
    pub initial: ScribbleMap,
    /// Correction fed before round `t + 1`.
    pub corrections: Vec<ScribbleMap>,
    /// Binarized prediction of round `t`, fed to round `t + 1`.
    pub prev_masks: Vec<BinaryMask>,
}

/// Where corrections for rounds after the first come from.
pub enum Corrections<'a> {
    /// Synthesized from the live prediction's errors.
    Oracle { gen: &'a GenParams, seed: u64 },
    /// Replayed from a recorded plan.
    Replay(&'a RolloutPlan),
}

pub struct Episode {
    pub logits: Vec<NodeId>,
    pub masks: Vec<BinaryMask>,
    pub plan: RolloutPlan,
}

/// Records `rounds` refinement rounds on `net`'s tape.
#[allow(clippy::too_many_arguments)]
pub fn record_episode<T: Scalar>(
    net: &mut NetGraph<'_, T>,
    image: &ImageGrid,
    gt: &BinaryMask,
    initial: &ScribbleMap,
    corrections: Corrections<'_>,
    rounds: usize,
    flags: RoundFlags,
    threshold: f64,
) -> Result<Episode> {
    if rounds == 0 {
        return Err(Error::invalid("an episode needs at least one round"));
    }
    gt.check_same_dims(initial.positive())?;
    if image.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: image.dims(),
        });
    }
    if let Corrections::Replay(plan) = &corrections {
        if plan.corrections.len() + 1 < rounds || plan.prev_masks.len() + 1 < rounds {
            return Err(Error::invalid("rollout plan is shorter than the episode"));
        }
    }
    let (w, h) = gt.dims();
    let f_img = net.image_encode(image)?;
    let mut acc = initial.clone();
    let mut latest = initial.clone();
    let mut memory = None;
    let mut plan = RolloutPlan {
        initial: initial.clone(),
        corrections: Vec::new(),
        prev_masks: Vec::new(),
    };
    let mut logits = Vec::with_capacity(rounds);
    let mut masks: Vec<BinaryMask> = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let prev = if t == 0 {
            None
        } else {
            let (correction, prev) = match &corrections {
                Corrections::Oracle { gen, seed } => {
                    let prev = masks[t - 1].clone();
                    let c = corrective_scribbles(&prev, gt, gen, &mut stream(*seed, &[t as u64]))?;
                    (c, prev)
                }
                Corrections::Replay(p) => (p.corrections[t - 1].clone(), p.prev_masks[t - 1].clone()),
            };
            acc = acc.channel_max(&correction)?;
            latest = correction.clone();
            plan.corrections.push(correction);
            plan.prev_masks.push(prev.clone());
            Some(prev)
        };
        let prompt = RoundPrompt {
            accumulated: &acc,
            latest: &latest,
            prev_mask: prev.as_ref(),
        };
        let nodes = net.round(f_img, prompt, memory, flags)?;
        masks.push(binarize_logits(net.value(nodes.logits), w, h, threshold));
        logits.push(nodes.logits);
        memory = nodes.memory;
    }
    Ok(Episode { logits, masks, plan })
}

/// Records an episode and its multi-round loss; returns the loss node.
#[allow(clippy::too_many_arguments)]
pub fn record_episode_loss<T: Scalar>(
    net: &mut NetGraph<'_, T>,
    image: &ImageGrid,
    gt: &BinaryMask,
    initial: &ScribbleMap,
    corrections: Corrections<'_>,
    flags: RoundFlags,
    loss: &LossConfig,
) -> Result<(NodeId, Episode)> {
    let ep = record_episode(net, image, gt, initial, corrections, loss.rounds, flags, 0.0)?;
    let l = record_multi_round_loss(&mut net.graph, &ep.logits, gt, loss)?;
    Ok((l, ep))
}
