use rand::Rng;

use super::generate::{generate_negative, generate_scribble};
use super::params::{GenParams, ScribbleStyle};
use crate::error::Result;
use crate::raster::{connected_components, BinaryMask, Channel, ScribbleMap};

/// Disagreement between a prediction and the ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMap {
    /// Target pixels the prediction missed.
    pub false_negative: BinaryMask,
    /// Predicted pixels outside the target.
    pub false_positive: BinaryMask,
}

impl ErrorMap {
    pub fn new(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        Ok(Self {
            false_negative: gt.and_not(pred)?,
            false_positive: pred.and_not(gt)?,
        })
    }

    /// Error components large enough to be annotated, per channel.
    pub fn qualifying(&self, min_area: usize) -> (BinaryMask, BinaryMask) {
        let keep = |m: &BinaryMask| connected_components(m).select(|_, area| area >= min_area);
        (keep(&self.false_negative), keep(&self.false_positive))
    }
}

/// Corrective scribbles for the errors of `pred`, with adaptive positives.
pub fn corrective_scribbles<R: Rng + ?Sized>(
    pred: &BinaryMask,
    gt: &BinaryMask,
    params: &GenParams,
    rng: &mut R,
) -> Result<ScribbleMap> {
    corrective_scribbles_with_style(pred, gt, ScribbleStyle::Adaptive, params, rng)
}

/// Positive strokes on missed target regions and cross-outs on spurious
/// regions; error components smaller than `params.min_component_area` are
/// ignored. An empty map means nothing was worth correcting.
///
/// With an empty prediction this yields exactly
/// `generate_scribble(gt, style, params, rng)` when `gt` has a qualifying
/// component.
pub fn corrective_scribbles_with_style<R: Rng + ?Sized>(
    pred: &BinaryMask,
    gt: &BinaryMask,
    style: ScribbleStyle,
    params: &GenParams,
    rng: &mut R,
) -> Result<ScribbleMap> {
    params.validate()?;
    pred.check_same_dims(gt)?;
    let (fn_mask, fp_mask) = ErrorMap::new(pred, gt)?.qualifying(params.min_component_area);
    let (w, h) = gt.dims();
    let mut out = ScribbleMap::empty(w, h);
    if fn_mask.count() > 0 {
        let pos = generate_scribble(&fn_mask, style, params, rng)?;
        out.paint(pos.positive(), Channel::Positive)?;
    }
    if fp_mask.count() > 0 {
        let neg = generate_negative(&fp_mask, params, rng)?;
        out.paint(neg.negative(), Channel::Negative)?;
    }
    Ok(out)
}
