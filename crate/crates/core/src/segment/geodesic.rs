use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{check_prompt, SegmentSession, Segmenter, SegmenterKind};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;
    fn try_from(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::invalid(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        const FOUR: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        const EIGHT: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeodesicParams {
    /// Weight of the luma difference against the euclidean step length.
    pub lambda: f64,
    pub connectivity: Connectivity,
}

impl Default for GeodesicParams {
    fn default() -> Self {
        Self {
            lambda: 20.0,
            connectivity: Connectivity::Eight,
        }
    }
}

impl GeodesicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source shortest-path distance from `seeds` over the pixel grid,
/// with edge cost `|step| * (1 + lambda * |luma difference|)`. Pixels that
/// no seed reaches (or all pixels, without seeds) get `f64::INFINITY`.
pub fn geodesic_distance(luma: &[f64], seeds: &BinaryMask, params: &GeodesicParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (w, h) = seeds.dims();
    if luma.len() != w * h {
        return Err(Error::ShapeMismatch {
            op: "geodesic_distance",
            detail: format!("{} luma values for a {w}x{h} seed mask", luma.len()),
        });
    }
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    for (i, d) in dist.iter_mut().enumerate() {
        if seeds.get_index(i) {
            *d = 0.0;
            heap.push(Entry { dist: 0.0, index: i });
        }
    }
    let offsets = params.connectivity.offsets();
    while let Some(Entry { dist: d, index }) = heap.pop() {
        if d > dist[index] {
            continue;
        }
        let (x, y) = ((index % w) as i64, (index / w) as i64);
        for &(dx, dy) in offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let n = ny as usize * w + nx as usize;
            let step = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let nd = d + step * (1.0 + params.lambda * (luma[n] - luma[index]).abs());
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(Entry { dist: nd, index: n });
            }
        }
    }
    Ok(dist)
}

/// Labels each pixel by the nearer seed set in geodesic distance; ties go to
/// the positive seeds. Without negative seeds everything is foreground,
/// without positive seeds everything is background.
pub fn geodesic_segment(image: &ImageGrid, scribbles: &ScribbleMap, params: &GeodesicParams) -> Result<BinaryMask> {
    check_prompt(image.dims(), scribbles)?;
    params.validate()?;
    let (w, h) = image.dims();
    let has_pos = scribbles.positive().count() > 0;
    let has_neg = scribbles.negative().count() > 0;
    match (has_pos, has_neg) {
        (false, _) => return Ok(BinaryMask::new(w, h)),
        (true, false) => return Ok(BinaryMask::full(w, h)),
        _ => {}
    }
    let luma = image.luma_plane();
    let dp = geodesic_distance(&luma, scribbles.positive(), params)?;
    let dn = geodesic_distance(&luma, scribbles.negative(), params)?;
    BinaryMask::from_bits(w, h, dp.iter().zip(&dn).map(|(p, n)| p <= n).collect())
}

/// Geodesic backend: every round re-labels from all accumulated seeds.
#[derive(Debug, Clone, Default)]
pub struct GeodesicSegmenter {
    pub params: GeodesicParams,
}

impl GeodesicSegmenter {
    pub fn new(params: GeodesicParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

struct GeodesicSession {
    image: ImageGrid,
    params: GeodesicParams,
    acc: ScribbleMap,
    round: usize,
}

impl Segmenter for GeodesicSegmenter {
    fn kind(&self) -> SegmenterKind {
        SegmenterKind::Geodesic
    }

    fn start(&self, image: &ImageGrid, _gt: Option<&BinaryMask>) -> Result<Box<dyn SegmentSession>> {
        let (w, h) = image.dims();
        Ok(Box::new(GeodesicSession {
            image: image.clone(),
            params: self.params,
            acc: ScribbleMap::empty(w, h),
            round: 0,
        }))
    }
}

impl SegmentSession for GeodesicSession {
    fn step(&mut self, prompt: &ScribbleMap) -> Result<BinaryMask> {
        check_prompt(self.image.dims(), prompt)?;
        let acc = self.acc.channel_max(prompt)?;
        let mask = geodesic_segment(&self.image, &acc, &self.params)?;
        self.acc = acc;
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
