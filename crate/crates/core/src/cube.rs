//! Core data containers: spectral cubes and per-pixel label maps.
//!
//! A cube stores an `n x B` matrix whose row `i` is pixel `i` and whose
//! column `j` is band `j`. The spatial vectorization order is fixed for the
//! whole crate: pixel index `i = y * width + x` (row-major over the grid,
//! `x` fastest). Every operator in this repository relies on this single
//! convention.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// An `n`-pixel by `B`-band image with its spatial grid metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    data: Array2<f64>,
    width: usize,
    height: usize,
    band_labels: Option<Vec<String>>,
}

impl SpectralCube {
    /// Wraps an `n x B` matrix; `n` must equal `width * height`.
    pub fn new(data: Array2<f64>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || data.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "cube dimensions must be positive, got {}x{} with {} bands",
                width,
                height,
                data.ncols()
            )));
        }
        if data.nrows() != width * height {
            return Err(Error::Dimension(format!(
                "cube has {} rows but grid is {}x{} ({} pixels)",
                data.nrows(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self { data, width, height, band_labels: None })
    }

    /// All-zero cube of the given grid and band count.
    pub fn zeros(width: usize, height: usize, bands: usize) -> Result<Self> {
        Self::new(Array2::zeros((width * height, bands)), width, height)
    }

    pub fn with_band_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.bands() {
            return Err(Error::Dimension(format!(
                "{} labels for {} bands",
                labels.len(),
                self.bands()
            )));
        }
        self.band_labels = Some(labels);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn band_labels(&self) -> Option<&[String]> {
        self.band_labels.as_deref()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Value at grid position `(x, y)` in band `b`.
    pub fn at(&self, x: usize, y: usize, b: usize) -> f64 {
        self.data[[y * self.width + x, b]]
    }

    /// Copies band `b` out as a `height x width` image.
    pub fn band_image(&self, b: usize) -> Array2<f64> {
        let mut img = Array2::zeros((self.height, self.width));
        for y in 0..self.height {
            for x in 0..self.width {
                img[[y, x]] = self.data[[y * self.width + x, b]];
            }
        }
        img
    }

    /// Assembles a cube from per-band `height x width` images.
    pub fn from_band_images(images: &[Array2<f64>], width: usize, height: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Dimension("no bands given".into()));
        }
        for (b, img) in images.iter().enumerate() {
            if img.nrows() != height || img.ncols() != width {
                return Err(Error::Dimension(format!(
                    "band {} is {}x{}, expected {}x{}",
                    b,
                    img.ncols(),
                    img.nrows(),
                    width,
                    height
                )));
            }
        }
        let mut data = Array2::zeros((width * height, images.len()));
        for (b, img) in images.iter().enumerate() {
            for y in 0..height {
                for x in 0..width {
                    data[[y * width + x, b]] = img[[y, x]];
                }
            }
        }
        Self::new(data, width, height)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Errors if any entry is NaN or infinite.
    pub fn validate_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Parameter("cube contains non-finite entries".into()))
        }
    }
}

/// Per-pixel integer class labels on a grid. `0` is reserved for "unlabeled";
/// classes are `1..=num_classes()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<u32>,
    width: usize,
    height: usize,
}

impl LabelMap {
    pub fn new(labels: Vec<u32>, width: usize, height: usize) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} labels for a {}x{} grid",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self { labels, width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Highest class index present (0 when everything is unlabeled).
    pub fn num_classes(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Pixel count per class `1..=num_classes()`.
    pub fn class_counts(&self) -> Vec<usize> {
        let l = self.num_classes() as usize;
        let mut counts = vec![0usize; l];
        for &v in &self.labels {
            if v > 0 {
                counts[v as usize - 1] += 1;
            }
        }
        counts
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.iter().filter(|&&v| v > 0).count()
    }
}
