use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::distance::interior_depth;
use super::mask::BinaryMask;
use super::NEIGHBORS8;
use crate::error::{Error, Result};

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }

    /// Long side over short side, `>= 1`.
    pub fn aspect_ratio(&self) -> f64 {
        let (w, h) = (self.width() as f64, self.height() as f64);
        w.max(h) / w.min(h)
    }
}

/// 8-connected component labelling of a mask.
///
/// Label `0` is background; components are numbered `1..=count` in the order
/// their first pixel is met by a row-major scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelComponents {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
    /// Pixel count of component `k` at index `k - 1`.
    pub areas: Vec<usize>,
    /// Bounding box of component `k` at index `k - 1`.
    pub bboxes: Vec<BBox>,
}

impl LabelComponents {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Mask of component `id` (1-based).
    pub fn component_mask(&self, id: usize) -> BinaryMask {
        let id = id as u32;
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == id).collect(),
        )
        .expect("label grid matches dimensions")
    }

    /// Union of the components accepted by `keep(id, area)`.
    pub fn select(&self, mut keep: impl FnMut(usize, usize) -> bool) -> BinaryMask {
        let accepted: Vec<bool> = (1..=self.count).map(|k| keep(k, self.areas[k - 1])).collect();
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels
                .iter()
                .map(|&l| l != 0 && accepted[l as usize - 1])
                .collect(),
        )
        .expect("label grid matches dimensions")
    }

    /// Component ids sorted by area, largest first (ties by id).
    pub fn ids_by_area_desc(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (1..=self.count).collect();
        ids.sort_by(|&a, &b| self.areas[b - 1].cmp(&self.areas[a - 1]).then(a.cmp(&b)));
        ids
    }
}

pub fn connected_components(mask: &BinaryMask) -> LabelComponents {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut bboxes = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if !mask.get_index(start) || labels[start] != 0 {
            continue;
        }
        let id = areas.len() as u32 + 1;
        let (sx, sy) = (start % w, start / w);
        let mut bbox = BBox {
            min_x: sx,
            min_y: sy,
            max_x: sx,
            max_y: sy,
        };
        let mut area = 0;
        labels[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = (i % w, i / w);
            bbox.min_x = bbox.min_x.min(x);
            bbox.max_x = bbox.max_x.max(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_y = bbox.max_y.max(y);
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if mask.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 {
                        labels[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        areas.push(area);
        bboxes.push(bbox);
    }

    LabelComponents {
        width: w,
        height: h,
        labels,
        count: areas.len(),
        areas,
        bboxes,
    }
}

/// Pixel of `region` farthest from any non-region pixel (the canvas outside
/// counts as non-region). Ties resolve to the first pixel in row-major order.
pub fn deepest_pixel(region: &BinaryMask) -> Option<(usize, usize)> {
    let depth = interior_depth(region);
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in depth.values().iter().enumerate() {
        if region.get_index(i) && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| (i % region.width(), i / region.width()))
}

/// Click location for a region: the mean pixel rounded to the nearest
/// integer, snapped to the deepest interior pixel when the mean falls outside
/// the region (concave shapes).
pub fn centroid_in_region(region: &BinaryMask) -> Result<(usize, usize)> {
    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
    for (x, y) in region.pixels() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let cx = (sx / n as f64).round() as usize;
    let cy = (sy / n as f64).round() as usize;
    if region.get(cx, cy) {
        Ok((cx, cy))
    } else {
        deepest_pixel(region).ok_or(Error::EmptyRegion)
    }
}
