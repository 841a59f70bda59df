use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major boolean raster.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "super::io::MaskRle", into = "super::io::MaskRle")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        for y in 0..self.height {
            let row: String = (0..self.width)
                .map(|x| if self.get(x, y) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

impl BinaryMask {
    /// All-background mask.
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        m.bits.fill(true);
        m
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be >= 1"));
        }
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "bit count {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    /// Parses rows of `#` (foreground) and any other character (background).
    /// Handy for small fixtures in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        Self::from_fn(width, height, |x, y| rows[y].chars().nth(x) == Some('#'))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    /// `self ∧ ¬other`
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.check_same_dims(other)?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count())
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Nearest-neighbour resampling to a new size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        if (width, height) == self.dims() {
            return self.clone();
        }
        BinaryMask::from_fn(width, height, |x, y| {
            let sx = ((2 * x + 1) * self.width / (2 * width)).min(self.width - 1);
            let sy = ((2 * y + 1) * self.height / (2 * height)).min(self.height - 1);
            self.get(sx, sy)
        })
    }
}

/// Scribble channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

/// Two-channel scribble prompt: positive (target) and negative (background)
/// strokes. A pixel carries at most one label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "super::io::ScribbleRle", into = "super::io::ScribbleRle")]
pub struct ScribbleMap {
    positive: BinaryMask,
    negative: BinaryMask,
}

impl ScribbleMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            positive: BinaryMask::new(width, height),
            negative: BinaryMask::new(width, height),
        }
    }

    /// Fails if the channels differ in size or overlap.
    pub fn new(positive: BinaryMask, negative: BinaryMask) -> Result<Self> {
        positive.check_same_dims(&negative)?;
        if positive.intersection_count(&negative)? > 0 {
            return Err(Error::invalid("positive and negative channels overlap"));
        }
        Ok(Self { positive, negative })
    }

    pub fn from_positive(positive: BinaryMask) -> Self {
        let (w, h) = positive.dims();
        Self {
            positive,
            negative: BinaryMask::new(w, h),
        }
    }

    pub fn from_negative(negative: BinaryMask) -> Self {
        let (w, h) = negative.dims();
        Self {
            positive: BinaryMask::new(w, h),
            negative,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.positive.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.positive.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.positive.dims()
    }

    #[inline]
    pub fn positive(&self) -> &BinaryMask {
        &self.positive
    }

    #[inline]
    pub fn negative(&self) -> &BinaryMask {
        &self.negative
    }

    pub fn channel(&self, channel: Channel) -> &BinaryMask {
        match channel {
            Channel::Positive => &self.positive,
            Channel::Negative => &self.negative,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    /// Number of labelled pixels over both channels.
    pub fn count(&self) -> usize {
        self.positive.count() + self.negative.count()
    }

    /// Labels one pixel, clearing the other channel at that pixel.
    pub fn mark(&mut self, x: usize, y: usize, channel: Channel) {
        let (own, other) = match channel {
            Channel::Positive => (&mut self.positive, &mut self.negative),
            Channel::Negative => (&mut self.negative, &mut self.positive),
        };
        own.set(x, y, true);
        other.set(x, y, false);
    }

    /// Paints every foreground pixel of `stroke` into `channel` (latest wins).
    pub fn paint(&mut self, stroke: &BinaryMask, channel: Channel) -> Result<()> {
        self.positive.check_same_dims(stroke)?;
        for i in 0..stroke.len() {
            if stroke.get_index(i) {
                let (own, other) = match channel {
                    Channel::Positive => (&mut self.positive, &mut self.negative),
                    Channel::Negative => (&mut self.negative, &mut self.positive),
                };
                own.set_index(i, true);
                other.set_index(i, false);
            }
        }
        Ok(())
    }

    /// Per-channel union; a pixel labelled in both after the union takes the
    /// label it carries in `latest`.
    pub fn channel_max(&self, latest: &ScribbleMap) -> Result<ScribbleMap> {
        if self.dims() != latest.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: latest.dims(),
            });
        }
        let n = self.positive.len();
        let mut pos = Vec::with_capacity(n);
        let mut neg = Vec::with_capacity(n);
        for i in 0..n {
            let (lp, ln) = (latest.positive.get_index(i), latest.negative.get_index(i));
            let p = self.positive.get_index(i) || lp;
            let q = self.negative.get_index(i) || ln;
            if p && q {
                pos.push(lp);
                neg.push(ln);
            } else {
                pos.push(p);
                neg.push(q);
            }
        }
        let (w, h) = self.dims();
        Ok(ScribbleMap {
            positive: BinaryMask::from_bits(w, h, pos)?,
            negative: BinaryMask::from_bits(w, h, neg)?,
        })
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> ScribbleMap {
        ScribbleMap {
            positive: self.positive.resize_nearest(width, height),
            negative: self.negative.resize_nearest(width, height),
        }
    }
}

/// Free-function form of [`ScribbleMap::channel_max`].
pub fn channel_max(a: &ScribbleMap, b: &ScribbleMap) -> Result<ScribbleMap> {
    a.channel_max(b)
}
