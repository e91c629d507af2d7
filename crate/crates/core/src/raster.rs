//! Dense per-pixel rasters: binary masks, semantic label maps, depth maps.
//!
//! All rasters are stored row-major with `(u, v)` addressing, `u` to the
//! right and `v` downward.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "raster {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[self.index_of(u, v)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        let i = self.index_of(u, v);
        self.data[i] = value;
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Iterates `(u, v, &value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data.iter().enumerate().map(move |(i, x)| (i % w, i / w, x))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Fails with [`Error::SizeMismatch`] unless `other` has the same size.
    pub fn ensure_same_size<U>(&self, other: &Raster<U>) -> Result<()> {
        ensure_size(self.size(), other.size())
    }
}

pub(crate) fn ensure_size(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

/// Per-pixel `{0, 1}` mask.
pub type BinaryMask = Raster<bool>;

/// Per-pixel class IDs.
pub type SemanticMap = Raster<u8>;

impl Raster<bool> {
    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::filled(width, height, true)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> Self {
        self.map(|&b| !b)
    }

    /// `true` when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.size() == other.size() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union; `None` when both masks are empty.
    pub fn iou(&self, other: &Self) -> Result<Option<f64>> {
        self.ensure_same_size(other)?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok((union > 0).then(|| inter as f64 / union as f64))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.ensure_same_size(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// Metric depth per pixel with an explicit validity channel.
///
/// Invalid pixels carry no depth; every valid value is finite and positive.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Raster<f64>,
    valid: BinaryMask,
}

impl DepthMap {
    /// All-invalid depth map.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            values: Raster::filled(width, height, 0.0),
            valid: BinaryMask::empty(width, height),
        }
    }

    /// Builds a depth map from raw values; non-finite or non-positive values
    /// become invalid pixels.
    pub fn from_values(values: Raster<f64>) -> Self {
        let valid = values.map(|&d| d.is_finite() && d > 0.0);
        let values = values.map(|&d| if d.is_finite() && d > 0.0 { d } else { 0.0 });
        Self { values, valid }
    }

    /// Builds a depth map from explicit values and validity, checking the
    /// invariant on every valid pixel.
    pub fn new(values: Raster<f64>, valid: BinaryMask) -> Result<Self> {
        values.ensure_same_size(&valid)?;
        for (i, (&d, &ok)) in values.iter().zip(valid.iter()).enumerate() {
            if ok && !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "depth at pixel ({}, {}) is {d} but marked valid",
                    i % values.width(),
                    i / values.width()
                )));
            }
        }
        let values = Raster::from_fn(values.width(), values.height(), |u, v| {
            if *valid.get(u, v) {
                *values.get(u, v)
            } else {
                0.0
            }
        });
        Ok(Self { values, valid })
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn size(&self) -> (usize, usize) {
        self.values.size()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = self.values.index_of(u, v);
        self.valid.as_slice()[i].then(|| self.values.as_slice()[i])
    }

    /// Stores `depth` at `(u, v)`; non-finite or non-positive values clear it.
    #[inline]
    pub fn set(&mut self, u: usize, v: usize, depth: Option<f64>) {
        match depth {
            Some(d) if d.is_finite() && d > 0.0 => {
                self.values.set(u, v, d);
                self.valid.set(u, v, true);
            }
            _ => {
                self.values.set(u, v, 0.0);
                self.valid.set(u, v, false);
            }
        }
    }

    pub fn validity(&self) -> &BinaryMask {
        &self.valid
    }

    /// Raw values; invalid pixels hold 0.
    pub fn values(&self) -> &Raster<f64> {
        &self.values
    }
}
