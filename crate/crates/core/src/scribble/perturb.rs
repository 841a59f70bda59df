use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::Polyline;

const SMOOTH_RADIUS: usize = 2;

/// Jitters every vertex with Gaussian noise smoothed along the stroke.
///
/// Noise is averaged over a window of up to five neighbouring vertices and
/// rescaled so each vertex keeps marginal standard deviation `sigma`; the
/// displacement norm is clamped at `4 * sigma`. `sigma == 0` returns the
/// stroke unchanged.
pub fn perturb_stroke<R: Rng + ?Sized>(stroke: &Polyline, sigma: f64, rng: &mut R) -> Polyline {
    let n = stroke.len();
    if sigma <= 0.0 || n == 0 {
        return stroke.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let raw: Vec<(f64, f64)> = (0..n).map(|_| (normal.sample(rng), normal.sample(rng))).collect();
    let closed = stroke.is_closed();
    let max_norm = 4.0 * sigma;

    let mut out = stroke.clone();
    for (i, p) in out.points_mut().iter_mut().enumerate() {
        let (mut sx, mut sy, mut m) = (0.0, 0.0, 0usize);
        for k in -(SMOOTH_RADIUS as i64)..=SMOOTH_RADIUS as i64 {
            let j = i as i64 + k;
            let j = if closed {
                j.rem_euclid(n as i64)
            } else if (0..n as i64).contains(&j) {
                j
            } else {
                continue;
            };
            // a closed loop shorter than the window must not double count
            if closed && n < 2 * SMOOTH_RADIUS + 1 && k.unsigned_abs() as usize > (n - 1) / 2 {
                continue;
            }
            sx += raw[j as usize].0;
            sy += raw[j as usize].1;
            m += 1;
        }
        let scale = 1.0 / (m as f64).sqrt();
        let (mut dx, mut dy) = (sx * scale, sy * scale);
        let norm = (dx * dx + dy * dy).sqrt();
        if norm > max_norm {
            dx *= max_norm / norm;
            dy *= max_norm / norm;
        }
        p.0 += dx;
        p.1 += dy;
    }
    out
}
