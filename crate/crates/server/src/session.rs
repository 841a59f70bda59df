use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use scribble_core::eval::iou_dice;
use scribble_core::raster::{rasterize_stroke, BinaryMask, Channel, ImageGrid, MaskRle, Polyline, ScribbleMap};
use scribble_core::segment::{SegmentSession, Segmenter, SegmenterKind};

use crate::error::{ApiError, ApiResult};

fn default_width() -> f64 {
    3.0
}

/// A freehand stroke in image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub channel: Channel,
    pub polyline: Vec<[f64; 2]>,
    #[serde(default = "default_width")]
    pub width: f64,
}

impl Stroke {
    /// Rasterizes the stroke; a single point becomes a dot of the stroke width.
    pub fn rasterize(&self, dims: (usize, usize)) -> ApiResult<BinaryMask> {
        if self.polyline.is_empty() {
            return Err(ApiError::Unprocessable("stroke polyline is empty".into()));
        }
        if self.polyline.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ApiError::Unprocessable("stroke coordinates must be finite".into()));
        }
        if !(self.width.is_finite() && self.width >= 1.0) {
            return Err(ApiError::Unprocessable(format!("stroke width must be >= 1, got {}", self.width)));
        }
        let mut pts: Vec<(f64, f64)> = self.polyline.iter().map(|p| (p[0], p[1])).collect();
        if pts.len() == 1 {
            pts.push(pts[0]);
        }
        Ok(rasterize_stroke(dims, &Polyline::open(pts), self.width)?)
    }
}

/// Strokes submitted before one prediction and the mask it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRound {
    pub round: usize,
    pub strokes: Vec<Stroke>,
    pub mask: MaskRle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeLog {
    pub sample_id: String,
    pub backend: SegmenterKind,
    pub target_class: Option<String>,
    pub rounds: Vec<LoggedRound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub round: usize,
    pub mask: MaskRle,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dice: Option<f64>,
}

/// Paints strokes in order into a fresh map (later strokes win).
pub fn strokes_to_scribble(dims: (usize, usize), strokes: &[Stroke]) -> ApiResult<ScribbleMap> {
    let mut map = ScribbleMap::empty(dims.0, dims.1);
    for s in strokes {
        map.paint(&s.rasterize(dims)?, s.channel)?;
    }
    Ok(map)
}

/// Re-runs a stroke log through `segmenter` and returns the masks.
pub fn replay_log(
    log: &StrokeLog,
    segmenter: &dyn Segmenter,
    image: &ImageGrid,
    gt: Option<&BinaryMask>,
) -> ApiResult<Vec<BinaryMask>> {
    let mut s = segmenter.start(image, gt)?;
    log.rounds
        .iter()
        .map(|r| Ok(s.step(&strokes_to_scribble(image.dims(), &r.strokes)?)?))
        .collect()
}

pub struct Session {
    pub id: String,
    pub sample_id: String,
    pub target_class: Option<String>,
    segmenter: Arc<dyn Segmenter>,
    image: Arc<ImageGrid>,
    gt: Option<BinaryMask>,
    inner: Box<dyn SegmentSession>,
    pending: Vec<Stroke>,
    log: Vec<LoggedRound>,
    pub created: Instant,
}

impl Session {
    pub fn new(
        id: String,
        sample_id: String,
        target_class: Option<String>,
        segmenter: Arc<dyn Segmenter>,
        image: Arc<ImageGrid>,
        gt: Option<BinaryMask>,
    ) -> ApiResult<Self> {
        let inner = segmenter.start(&image, gt.as_ref())?;
        Ok(Self {
            id,
            sample_id,
            target_class,
            segmenter,
            image,
            gt,
            inner,
            pending: Vec::new(),
            log: Vec::new(),
            created: Instant::now(),
        })
    }

    pub fn backend(&self) -> SegmenterKind {
        self.segmenter.kind()
    }

    pub fn round(&self) -> usize {
        self.inner.round()
    }

    pub fn pending(&self) -> &[Stroke] {
        &self.pending
    }

    pub fn add_stroke(&mut self, stroke: Stroke) -> ApiResult<()> {
        stroke.rasterize(self.image.dims())?;
        self.pending.push(stroke);
        Ok(())
    }

    /// Runs the next round with the strokes added since the last prediction.
    pub fn predict(&mut self) -> ApiResult<Prediction> {
        let prompt = strokes_to_scribble(self.image.dims(), &self.pending)?;
        let round = self.inner.round();
        let mask = self.inner.step(&prompt)?;
        let metrics = match &self.gt {
            Some(gt) => Some(iou_dice(&mask, gt)?),
            None => None,
        };
        let rle = MaskRle::from(&mask);
        self.log.push(LoggedRound {
            round,
            strokes: std::mem::take(&mut self.pending),
            mask: rle.clone(),
        });
        Ok(Prediction {
            round,
            mask: rle,
            iou: metrics.map(|m| m.0),
            dice: metrics.map(|m| m.1),
        })
    }

    /// Drops the strokes added since the last prediction.
    pub fn undo(&mut self) -> usize {
        std::mem::take(&mut self.pending).len()
    }

    /// Back to round 0 with no strokes.
    pub fn reset(&mut self) -> ApiResult<()> {
        self.inner = self.segmenter.start(&self.image, self.gt.as_ref())?;
        self.pending.clear();
        self.log.clear();
        Ok(())
    }

    pub fn log(&self) -> StrokeLog {
        StrokeLog {
            sample_id: self.sample_id.clone(),
            backend: self.backend(),
            target_class: self.target_class.clone(),
            rounds: self.log.clone(),
        }
    }
}
