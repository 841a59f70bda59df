//! Scribble-conditioned interactive segmentation workbench.
//!
//! The crate is organised bottom-up:
//!
//! - [`raster`]: binary masks, two-channel scribble maps and the dense grid
//!   algorithms everything else is built on (labelling, distance transforms,
//!   thinning, boundary tracing, stroke rasterization).
//! - [`scribble`]: synthesis of initial and corrective scribbles from
//!   ground-truth masks and error maps.
//! - [`net`]: a toy-scale, gradient-checked implementation of the learnable
//!   prompt pathway (scribble encoder, spatial gated fusion, memory attention
//!   with low-rank adapters, mask decoder) and its multi-round loss.
//! - [`refine`]: the dual-track multi-round refinement loop over one image.
//! - [`segment`]: interchangeable segmentation backends.
//! - [`eval`]: metrics, the automated interaction protocol and reporting.
//! - [`data`]: dataset manifests and the synthetic shape generator.
//!
//! Numerical code is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! below fix the precision used by the evaluation and serving paths.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod eval;
pub mod net;
pub mod raster;
pub mod refine;
pub mod rng;
pub mod scalar;
pub mod scribble;
pub mod segment;

pub use error::{Error, Result};
pub use raster::{BinaryMask, DistanceField, ImageGrid, LabelComponents, Polyline, ScribbleMap};
pub use scalar::Scalar;

/// Distance field in double precision.
pub type DistanceField64 = raster::DistanceField<f64>;
/// Dense tensor in single precision.
pub type Tensor32 = net::Tensor<f32>;
/// Dense tensor in double precision.
pub type Tensor64 = net::Tensor<f64>;
/// Toy network parameters in single precision.
pub type ToyNetParams32 = net::ToyNetParams<f32>;
/// Toy network parameters in double precision (training, gradient checks, evaluation).
pub type ToyNetParams64 = net::ToyNetParams<f64>;
/// Refinement session state in double precision.
pub type SessionState64 = refine::SessionState<f64>;
