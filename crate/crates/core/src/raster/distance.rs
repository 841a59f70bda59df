use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Two-pass 3-4 chamfer approximation, scaled to pixel units.
    Chamfer34,
    /// Exact euclidean distance (separable lower-envelope algorithm).
    #[default]
    ExactEuclidean,
}

/// Per-pixel distance to the nearest foreground pixel of a source mask.
/// When the source has no foreground every value is `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> DistanceField<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn max_finite(&self) -> Option<T> {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(None, |acc, v| Some(acc.map_or(v, |a: T| a.max(v))))
    }
}

pub fn distance_transform<T: Scalar>(mask: &BinaryMask, metric: Metric) -> DistanceField<T> {
    let (w, h) = mask.dims();
    let values = if mask.is_empty() {
        vec![T::infinity(); w * h]
    } else {
        match metric {
            Metric::ExactEuclidean => exact_euclidean(mask),
            Metric::Chamfer34 => chamfer34(mask),
        }
    };
    DistanceField {
        width: w,
        height: h,
        values,
    }
}

/// Distance from each pixel of `region` to the nearest pixel outside it, with
/// everything beyond the canvas counted as outside. Zero off the region.
pub fn interior_depth(region: &BinaryMask) -> DistanceField<f64> {
    let (w, h) = region.dims();
    let padded = BinaryMask::from_fn(w + 2, h + 2, |x, y| {
        x == 0 || y == 0 || x == w + 1 || y == h + 1 || !region.get(x - 1, y - 1)
    });
    let full: DistanceField<f64> = distance_transform(&padded, Metric::ExactEuclidean);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(full.get(x + 1, y + 1));
        }
    }
    DistanceField {
        width: w,
        height: h,
        values,
    }
}

// Finite stand-in for "no site"; keeps parabola intersections free of inf-inf.
const FAR: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas rooted at each sample).
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this never walks below the first parabola.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *o = (qf - p) * (qf - p) + f[v[k]];
    }
}

fn exact_euclidean<T: Scalar>(mask: &BinaryMask) -> Vec<T> {
    let (w, h) = mask.dims();
    let mut grid: Vec<f64> = mask.bits().iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        dt1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        dt1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid.into_iter()
        .map(|d2| if d2 >= FAR * 0.5 { T::infinity() } else { T::of(d2.sqrt()) })
        .collect()
}

fn chamfer34<T: Scalar>(mask: &BinaryMask) -> Vec<T> {
    let (w, h) = mask.dims();
    const INF: u64 = u64::MAX / 4;
    let mut d: Vec<u64> = mask.bits().iter().map(|&b| if b { 0 } else { INF }).collect();
    let idx = |x: usize, y: usize| y * w + x;
    let relax = |d: &mut Vec<u64>, x: usize, y: usize, nx: i64, ny: i64, c: u64| {
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
            let cand = d[idx(nx as usize, ny as usize)] + c;
            let cur = &mut d[idx(x, y)];
            if cand < *cur {
                *cur = cand;
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as i64, y as i64);
            relax(&mut d, x, y, xi - 1, yi, 3);
            relax(&mut d, x, y, xi - 1, yi - 1, 4);
            relax(&mut d, x, y, xi, yi - 1, 3);
            relax(&mut d, x, y, xi + 1, yi - 1, 4);
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let (xi, yi) = (x as i64, y as i64);
            relax(&mut d, x, y, xi + 1, yi, 3);
            relax(&mut d, x, y, xi + 1, yi + 1, 4);
            relax(&mut d, x, y, xi, yi + 1, 3);
            relax(&mut d, x, y, xi - 1, yi + 1, 4);
        }
    }
    d.into_iter()
        .map(|v| if v >= INF { T::infinity() } else { T::of(v as f64 / 3.0) })
        .collect()
}
