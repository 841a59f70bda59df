//! Dense binary-raster primitives.
//!
//! All grids are row-major with `x` growing right and `y` growing down.
//! Connectivity is 8-neighbour throughout.

mod components;
mod contour;
mod distance;
mod image;
mod io;
mod mask;
mod skeleton;
mod stroke;

pub use components::{centroid_in_region, connected_components, deepest_pixel, BBox, LabelComponents};
pub use contour::trace_contours;
pub use distance::{distance_transform, interior_depth, DistanceField, Metric};
pub use image::ImageGrid;
pub use io::{MaskRle, ScribbleRle};
pub use mask::{channel_max, BinaryMask, Channel, ScribbleMap};
pub use skeleton::skeletonize;
pub use stroke::{rasterize_stroke, Polyline};

/// Offsets of the 8-neighbourhood, clockwise on screen starting at west.
pub(crate) const NEIGHBORS8: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];
