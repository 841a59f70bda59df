//! PNG and run-length JSON encodings.
//!
//! Runs alternate background/foreground counts in row-major order, always
//! starting with a (possibly zero-length) background run.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::mask::{BinaryMask, ScribbleMap};
use crate::error::{Error, Result};

fn encode_runs(mask: &BinaryMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in mask.bits() {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

fn decode_runs(width: usize, height: usize, runs: &[u32]) -> Result<BinaryMask> {
    let n = width * height;
    let mut bits = Vec::with_capacity(n);
    let mut value = false;
    for &r in runs {
        bits.extend(std::iter::repeat_n(value, r as usize));
        value = !value;
    }
    if bits.len() != n {
        return Err(Error::invalid(format!(
            "run lengths sum to {} but the canvas has {} pixels",
            bits.len(),
            n
        )));
    }
    BinaryMask::from_bits(width, height, bits)
}

/// Wire form of a single mask: `{"w":W,"h":H,"runs":[...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub w: usize,
    pub h: usize,
    pub runs: Vec<u32>,
}

impl MaskRle {
    pub fn decode(&self) -> Result<BinaryMask> {
        decode_runs(self.w, self.h, &self.runs)
    }
}

impl From<&BinaryMask> for MaskRle {
    fn from(m: &BinaryMask) -> Self {
        MaskRle {
            w: m.width(),
            h: m.height(),
            runs: encode_runs(m),
        }
    }
}

/// Wire form of a scribble map: `{"w":W,"h":H,"pos":[runs],"neg":[runs]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScribbleRle {
    pub w: usize,
    pub h: usize,
    pub pos: Vec<u32>,
    pub neg: Vec<u32>,
}

impl ScribbleRle {
    pub fn decode(&self) -> Result<ScribbleMap> {
        ScribbleMap::new(
            decode_runs(self.w, self.h, &self.pos)?,
            decode_runs(self.w, self.h, &self.neg)?,
        )
    }
}

impl From<&ScribbleMap> for ScribbleRle {
    fn from(s: &ScribbleMap) -> Self {
        ScribbleRle {
            w: s.width(),
            h: s.height(),
            pos: encode_runs(s.positive()),
            neg: encode_runs(s.negative()),
        }
    }
}

impl BinaryMask {
    /// Loads an 8-bit single-channel PNG (any non-zero value is foreground).
    /// Other colour types are converted to luma first.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        BinaryMask::from_bits(
            w as usize,
            h as usize,
            img.pixels().map(|p| p.0[0] != 0).collect(),
        )
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width() as u32, self.height() as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_rle(&self) -> MaskRle {
        MaskRle::from(self)
    }
}

impl ScribbleMap {
    fn pair_paths(prefix: &Path) -> (PathBuf, PathBuf) {
        let s = prefix.as_os_str().to_string_lossy();
        (
            PathBuf::from(format!("{s}_pos.png")),
            PathBuf::from(format!("{s}_neg.png")),
        )
    }

    /// Writes `<prefix>_pos.png` and `<prefix>_neg.png`.
    pub fn save_png_pair(&self, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let (p, n) = Self::pair_paths(prefix.as_ref());
        self.positive().save_png(&p)?;
        self.negative().save_png(&n)?;
        Ok((p, n))
    }

    pub fn load_png_pair(prefix: impl AsRef<Path>) -> Result<Self> {
        let (p, n) = Self::pair_paths(prefix.as_ref());
        ScribbleMap::new(BinaryMask::load_png(p)?, BinaryMask::load_png(n)?)
    }

    pub fn to_rle(&self) -> ScribbleRle {
        ScribbleRle::from(self)
    }

    pub fn to_rle_json(&self) -> String {
        serde_json::to_string(&self.to_rle()).expect("RLE serializes")
    }

    pub fn from_rle_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ScribbleRle>(s)?.decode()
    }
}

impl TryFrom<MaskRle> for BinaryMask {
    type Error = Error;
    fn try_from(r: MaskRle) -> Result<Self> {
        r.decode()
    }
}

impl From<BinaryMask> for MaskRle {
    fn from(m: BinaryMask) -> Self {
        MaskRle::from(&m)
    }
}

impl TryFrom<ScribbleRle> for ScribbleMap {
    type Error = Error;
    fn try_from(r: ScribbleRle) -> Result<Self> {
        r.decode()
    }
}

impl From<ScribbleMap> for ScribbleRle {
    fn from(s: ScribbleMap) -> Self {
        ScribbleRle::from(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_starts_with_background_run() {
        let m = BinaryMask::from_ascii(&["##.", ".##"]);
        assert_eq!(m.to_rle().runs, vec![0, 2, 2, 2]);
        let e = BinaryMask::new(2, 2);
        assert_eq!(e.to_rle().runs, vec![4]);
    }

    #[test]
    fn scribble_json_shape() {
        let s = ScribbleMap::new(
            BinaryMask::from_ascii(&["#.."]),
            BinaryMask::from_ascii(&["..#"]),
        )
        .unwrap();
        assert_eq!(s.to_rle_json(), r#"{"w":3,"h":1,"pos":[0,1,2],"neg":[2,1]}"#);
        assert_eq!(ScribbleMap::from_rle_json(&s.to_rle_json()).unwrap(), s);
    }

    #[test]
    fn rle_with_bad_total_is_rejected() {
        let r = MaskRle { w: 2, h: 2, runs: vec![1, 1] };
        assert!(r.decode().is_err());
    }

    #[test]
    fn png_pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ScribbleMap::new(
            BinaryMask::from_ascii(&["#..", "..."]),
            BinaryMask::from_ascii(&["...", ".##"]),
        )
        .unwrap();
        let prefix = dir.path().join("s");
        let (p, n) = s.save_png_pair(&prefix).unwrap();
        assert!(p.ends_with("s_pos.png") && n.ends_with("s_neg.png"));
        assert_eq!(ScribbleMap::load_png_pair(&prefix).unwrap(), s);
    }

    proptest! {
        #[test]
        fn rle_round_trips(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let mut state = seed;
            let m = BinaryMask::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state >> 63 == 1
            });
            prop_assert_eq!(m.to_rle().decode().unwrap(), m);
        }
    }
}
