use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid};

/// On-disk dataset description. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: String,
    pub image: PathBuf,
    pub targets: Vec<ManifestTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTarget {
    pub class: String,
    pub mask: PathBuf,
}

/// A decoded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageGrid,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub class: String,
    pub mask: BinaryMask,
}

impl DatasetManifest {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(s)?;
        m.check_ids()?;
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(())
    }

    /// Decodes every image and mask; `base` is the manifest's directory.
    pub fn load_samples(&self, base: impl AsRef<Path>) -> Result<Vec<Sample>> {
        let base = base.as_ref();
        self.samples
            .iter()
            .map(|s| {
                let image = ImageGrid::load_png(base.join(&s.image))?;
                let targets = s
                    .targets
                    .iter()
                    .map(|t| {
                        let mask = BinaryMask::load_png(base.join(&t.mask))?;
                        if mask.dims() != image.dims() {
                            return Err(Error::DimensionMismatch {
                                expected: image.dims(),
                                actual: mask.dims(),
                            });
                        }
                        Ok(Target {
                            class: t.class.clone(),
                            mask,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Sample {
                    id: s.id.clone(),
                    image,
                    targets,
                })
            })
            .collect()
    }

    /// Reads a manifest file and decodes its samples.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vec<Sample>)> {
        let path = path.as_ref();
        let m = Self::read(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let samples = m.load_samples(base)?;
        Ok((m, samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_are_rejected() {
        let json = r#"{"name":"d","samples":[
            {"id":"a","image":"a.png","targets":[]},
            {"id":"a","image":"b.png","targets":[]}]}"#;
        assert!(DatasetManifest::from_json(json).is_err());
    }

    #[test]
    fn missing_files_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            name: "x".into(),
            samples: vec![ManifestSample {
                id: "a".into(),
                image: "missing.png".into(),
                targets: vec![],
            }],
        };
        assert!(m.load_samples(dir.path()).is_err());
    }

    #[test]
    fn mask_size_must_match_image() {
        let dir = tempfile::tempdir().unwrap();
        ImageGrid::gray(4, 4, |_, _| 10).save_png(dir.path().join("i.png")).unwrap();
        BinaryMask::new(3, 4).save_png(dir.path().join("m.png")).unwrap();
        let m = DatasetManifest {
            name: "x".into(),
            samples: vec![ManifestSample {
                id: "a".into(),
                image: "i.png".into(),
                targets: vec![ManifestTarget {
                    class: "c".into(),
                    mask: "m.png".into(),
                }],
            }],
        };
        assert!(matches!(m.load_samples(dir.path()), Err(Error::DimensionMismatch { .. })));
    }
}
