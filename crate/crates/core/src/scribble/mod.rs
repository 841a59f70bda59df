//! Scribble synthesis from ground-truth masks and prediction errors.
//!
//! Positive strokes come in three geometry-aware styles (centerline, wave,
//! contour) chosen per connected component; negative strokes are straight or
//! X-shaped cross-outs. All strokes are rasterized and clipped to the region
//! they annotate, so positives never leave the target and negatives never
//! touch it.

mod correct;
mod generate;
mod geometry;
mod params;
mod perturb;

pub use correct::{corrective_scribbles, corrective_scribbles_with_style, ErrorMap};
pub use generate::{generate_negative, generate_scribble};
pub use geometry::{component_stats, ComponentStats};
pub use params::{select_style, GenParams, ScribbleStyle};
pub use perturb::perturb_stroke;
