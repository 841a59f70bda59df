use crate::error::Result;
use crate::raster::BinaryMask;

/// `|pred ∩ gt| / |pred ∪ gt|`; two empty masks score 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.check_same_dims(gt)?;
    let inter = pred.intersection_count(gt)?;
    let union = pred.count() + gt.count() - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Dice derived from IoU as `2·iou / (1 + iou)`, equal to
/// `2|pred ∩ gt| / (|pred| + |gt|)` up to rounding; two empty masks score 1.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(dice_from_iou(iou(pred, gt)?))
}

pub fn dice_from_iou(iou: f64) -> f64 {
    2.0 * iou / (1.0 + iou)
}

/// Both metrics from one pass.
pub fn iou_dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    let i = iou(pred, gt)?;
    Ok((i, dice_from_iou(i)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(bits: &[u8]) -> BinaryMask {
        BinaryMask::from_bits(bits.len(), 1, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn hand_counts() {
        assert_eq!(iou(&m(&[1, 1, 0, 1]), &m(&[1, 1, 0, 1])).unwrap(), 1.0);
        assert_eq!(iou(&m(&[1, 1, 0, 0]), &m(&[0, 0, 1, 1])).unwrap(), 0.0);
        let i = iou(&m(&[1, 1, 1, 1, 0, 0]), &m(&[0, 0, 1, 1, 1, 1])).unwrap();
        assert!((i - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice_from_iou(1.0 / 3.0), 0.5);
        let d = dice(&m(&[1, 1, 1, 1]), &m(&[1, 1, 0, 0])).unwrap();
        assert!((d - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_pair_is_perfect() {
        assert_eq!(iou_dice(&m(&[0, 0]), &m(&[0, 0])).unwrap(), (1.0, 1.0));
        assert_eq!(iou_dice(&m(&[0, 0]), &m(&[0, 1])).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        assert!(iou(&m(&[0, 0]), &m(&[0, 0, 0])).is_err());
    }
}
