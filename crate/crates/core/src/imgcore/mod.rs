//! Image and mask rasters plus the preprocessing shared by every pipeline.

mod distance;
mod filter;
mod regions;

pub(crate) use distance::squared_distance;
pub use filter::{apply_mask, histogram, invert, median_filter};
pub use regions::{
    clear_border_objects, connected_components, fill_holes, select_lung_regions,
    select_lung_regions_with, Connectivity, LungSelection,
};

use crate::error::{Error, Result};

/// Default maximum gray level of 8-bit slices.
pub const DEFAULT_MAX_LEVEL: u32 = 255;

/// Row-major scalar intensity field with values in `[0, max_level]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    max_level: u32,
    data: Vec<f64>,
}

impl GrayImage {
    /// Builds an image with the default 8-bit gray range.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_max_level(width, height, data, DEFAULT_MAX_LEVEL)
    }

    pub fn with_max_level(
        width: usize,
        height: usize,
        data: Vec<f64>,
        max_level: u32,
    ) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidData(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if max_level == 0 {
            return Err(Error::InvalidParameter("max_level must be positive".into()));
        }
        let lt = max_level as f64;
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > lt)
        {
            return Err(Error::InvalidData(format!(
                "intensity {v} outside [0, {max_level}]"
            )));
        }
        Ok(Self {
            width,
            height,
            max_level,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from a per-pixel function `f(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Smallest and largest intensity, or `None` for an empty image.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        let first = *self.data.first()?;
        Some(
            self.data
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        )
    }

    /// Interprets the image as a binary mask: true where intensity exceeds half the range.
    pub fn to_mask(&self) -> BinaryMask {
        let half = self.max_level as f64 / 2.0;
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v > half).collect(),
        }
    }
}

/// Row-major boolean field, `true` marking foreground (lung parenchyma).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidData(format!(
                "{} values for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Bounds-checked lookup; pixels outside the raster read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    /// True when every foreground pixel of `other` is foreground here.
    pub fn contains(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| a || !b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    /// Pixels set here but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.check_shape(other)?;
        Ok(BinaryMask {
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

    /// Number of pixels where the two masks disagree.
    pub fn hamming(&self, other: &BinaryMask) -> Result<usize> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count())
    }

    /// Renders the mask as `{0, max_level}` intensities.
    pub fn to_gray(&self, max_level: u32) -> GrayImage {
        let lt = max_level as f64;
        GrayImage {
            width: self.width,
            height: self.height,
            max_level,
            data: self
                .data
                .iter()
                .map(|&b| if b { lt } else { 0.0 })
                .collect(),
        }
    }
}

/// Component labels produced by [`connected_components`]; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    component_count: usize,
}

impl LabeledImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count per label, indexed by label (entry 0 is background).
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.component_count + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// Mask of a single component.
    pub fn component_mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .labels
                .iter()
                .map(|&l| l == label && label != 0)
                .collect(),
        }
    }
}
