//! Interchangeable segmentation backends behind one session interface.

mod geodesic;
mod oracle;
mod toynet;

pub use geodesic::{geodesic_distance, geodesic_segment, Connectivity, GeodesicParams, GeodesicSegmenter};
pub use oracle::{oracle_segment, OracleParams, OracleSegmenter};
pub use toynet::ToyNetSegmenter;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Channel, ImageGrid, ScribbleMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    ToyNet,
    Geodesic,
    Oracle,
}

impl SegmenterKind {
    pub const ALL: [SegmenterKind; 3] = [SegmenterKind::ToyNet, SegmenterKind::Geodesic, SegmenterKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            SegmenterKind::ToyNet => "toynet",
            SegmenterKind::Geodesic => "geodesic",
            SegmenterKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for SegmenterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegmenterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SegmenterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown backend {s:?} (expected toynet, geodesic or oracle)")))
    }
}

/// Factory for per-target sessions.
pub trait Segmenter: Send + Sync {
    fn kind(&self) -> SegmenterKind;

    /// Opens a session on one image. `gt` is required by backends that
    /// simulate from ground truth and ignored by the others.
    fn start(&self, image: &ImageGrid, gt: Option<&BinaryMask>) -> Result<Box<dyn SegmentSession>>;
}

/// Sequential refinement state of one target.
pub trait SegmentSession: Send {
    /// Runs the next round with the strokes drawn since the previous round
    /// (the initial prompt at round 0) and returns the prediction.
    fn step(&mut self, prompt: &ScribbleMap) -> Result<BinaryMask>;

    /// Completed rounds.
    fn round(&self) -> usize;

    /// Union of all prompts so far.
    fn accumulated(&self) -> &ScribbleMap;
}

/// A point prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Click {
    pub x: usize,
    pub y: usize,
    pub channel: Channel,
}

impl Click {
    pub fn positive(x: usize, y: usize) -> Self {
        Self {
            x,
            y,
            channel: Channel::Positive,
        }
    }

    pub fn negative(x: usize, y: usize) -> Self {
        Self {
            x,
            y,
            channel: Channel::Negative,
        }
    }
}

/// Rasterizes clicks as single-pixel strokes of their channel.
pub fn clicks_to_scribble(width: usize, height: usize, clicks: &[Click]) -> Result<ScribbleMap> {
    let mut s = ScribbleMap::empty(width, height);
    for c in clicks {
        if c.x >= width || c.y >= height {
            return Err(Error::invalid(format!("click ({}, {}) outside {width}x{height}", c.x, c.y)));
        }
        s.mark(c.x, c.y, c.channel);
    }
    Ok(s)
}

pub(crate) fn check_prompt(image: (usize, usize), prompt: &ScribbleMap) -> Result<()> {
    if prompt.dims() != image {
        return Err(Error::DimensionMismatch {
            expected: image,
            actual: prompt.dims(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in SegmenterKind::ALL {
            assert_eq!(k.name().parse::<SegmenterKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("graphcut".parse::<SegmenterKind>().is_err());
    }

    #[test]
    fn clicks_become_single_pixels() {
        let s = clicks_to_scribble(5, 4, &[Click::positive(1, 2), Click::negative(4, 3)]).unwrap();
        assert_eq!(s.positive().pixels().collect::<Vec<_>>(), vec![(1, 2)]);
        assert_eq!(s.negative().pixels().collect::<Vec<_>>(), vec![(4, 3)]);
        assert!(clicks_to_scribble(5, 4, &[Click::positive(5, 0)]).is_err());
    }
}
