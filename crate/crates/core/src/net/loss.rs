use super::config::LossConfig;
use super::graph::{Graph, NodeId};
use super::model::downscale_majority;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::scalar::Scalar;

/// Target bits aligned with a `[1, s, s]` logit map.
fn target_bits<T: Scalar>(logits: &Tensor<T>, target: &BinaryMask) -> Result<Vec<bool>> {
    match logits.shape() {
        &[1, h, w] if h == w => {
            if target.dims() == (w, h) {
                Ok(target.bits().to_vec())
            } else {
                Ok(downscale_majority(target, w))
            }
        }
        s => Err(Error::ShapeMismatch {
            op: "loss",
            detail: format!("logits must be [1, s, s], got {s:?}"),
        }),
    }
}

/// Focal loss of `logits` against `target` (downscaled by majority vote if
/// resolutions differ).
pub fn focal_loss<T: Scalar>(logits: &Tensor<T>, target: &BinaryMask, cfg: &LossConfig) -> Result<T> {
    let bits = target_bits(logits, target)?;
    let mut g = Graph::new();
    let z = g.constant(logits.clone());
    let f = g.focal_loss(z, &bits, T::of(cfg.focal_gamma), T::of(cfg.focal_alpha))?;
    Ok(g.value(f).item())
}

/// Soft Dice loss with smoothing `eps`.
pub fn dice_loss<T: Scalar>(logits: &Tensor<T>, target: &BinaryMask, eps: f64) -> Result<T> {
    let bits = target_bits(logits, target)?;
    let mut g = Graph::new();
    let z = g.constant(logits.clone());
    let d = g.dice_loss(z, &bits, T::of(eps))?;
    Ok(g.value(d).item())
}

/// Records `Σ_t w_t [focal_weight · focal_t + dice_t]` with normalized
/// round weights `w_t ∝ t + 1`.
pub fn record_multi_round_loss<T: Scalar>(
    g: &mut Graph<T>,
    preds: &[NodeId],
    target: &BinaryMask,
    cfg: &LossConfig,
) -> Result<NodeId> {
    let weights = LossConfig::round_weights(preds.len())?;
    let mut terms = Vec::with_capacity(2 * preds.len());
    for (&z, w) in preds.iter().zip(weights) {
        let bits = target_bits(g.value(z), target)?;
        let f = g.focal_loss(z, &bits, T::of(cfg.focal_gamma), T::of(cfg.focal_alpha))?;
        let d = g.dice_loss(z, &bits, T::of(cfg.dice_eps))?;
        terms.push((f, T::of(w * cfg.focal_weight)));
        terms.push((d, T::of(w)));
    }
    g.weighted_sum(&terms)
}

/// Multi-round objective over already computed logit maps.
pub fn multi_round_loss<T: Scalar>(preds: &[Tensor<T>], target: &BinaryMask, cfg: &LossConfig) -> Result<T> {
    if preds.is_empty() {
        return Err(Error::invalid("multi-round loss needs at least one prediction"));
    }
    let mut g = Graph::new();
    let ids: Vec<NodeId> = preds.iter().map(|p| g.constant(p.clone())).collect();
    let l = record_multi_round_loss(&mut g, &ids, target, cfg)?;
    Ok(g.value(l).item())
}
