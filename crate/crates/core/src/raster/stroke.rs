use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use crate::error::{Error, Result};

/// Ordered stroke vertices in pixel coordinates (pixel centres sit at integer
/// coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<(f64, f64)>,
    closed: bool,
}

impl Polyline {
    pub fn open(points: Vec<(f64, f64)>) -> Self {
        Self {
            points,
            closed: false,
        }
    }

    pub fn closed(points: Vec<(f64, f64)>) -> Self {
        Self {
            points,
            closed: true,
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [(f64, f64)] {
        &mut self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Segments in drawing order, including the closing segment of a loop.
    pub fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.points.len();
        let extra = usize::from(self.closed && n > 2);
        (0..(n.saturating_sub(1) + extra)).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }
}

pub(crate) fn point_segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    dx * dx + dy * dy
}

/// Sets every pixel whose centre lies within `width / 2` of some segment.
/// Geometry outside the canvas is clipped.
pub fn rasterize_stroke(dims: (usize, usize), polyline: &Polyline, width: f64) -> Result<BinaryMask> {
    if polyline.len() < 2 {
        return Err(Error::invalid("a stroke needs at least two points"));
    }
    if !(width >= 1.0) {
        return Err(Error::invalid("stroke width must be >= 1"));
    }
    let (w, h) = dims;
    let mut out = BinaryMask::new(w, h);
    let r = width / 2.0;
    let r2 = r * r;
    for (a, b) in polyline.segments() {
        let x0 = (a.0.min(b.0) - r).floor().max(0.0);
        let x1 = (a.0.max(b.0) + r).ceil().min(w as f64 - 1.0);
        let y0 = (a.1.min(b.1) - r).floor().max(0.0);
        let y1 = (a.1.max(b.1) + r).ceil().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                if point_segment_dist2((x as f64, y as f64), a, b) <= r2 {
                    out.set(x, y, true);
                }
            }
        }
    }
    Ok(out)
}
