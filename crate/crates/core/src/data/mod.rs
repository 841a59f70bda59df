//! Dataset manifests and the bundled synthetic shape generator.

mod manifest;
mod synthetic;

pub use manifest::{DatasetManifest, ManifestSample, ManifestTarget, Sample, Target};
pub use synthetic::{synthetic_samples, write_synthetic_manifest, ShapeKind, SynthConfig};
