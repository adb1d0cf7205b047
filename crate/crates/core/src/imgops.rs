//! Matrix-free linear degradation and difference operators.
//!
//! These are the building blocks of the observation model: a cyclic
//! (periodic) spatial blur `K`, a decimation `S` with its zero-filling
//! adjoint, a spectral response projection `R`, and the cyclic first
//! difference operators `D_h`, `D_v`. All of them act band-by-band on the
//! columns of a [`SpectralCube`] without ever materializing a matrix.
//!
//! Boundary handling is strictly cyclic here; that is what makes `K`, `D_h`
//! and `D_v` block-circulant and therefore diagonal in the 2-D DFT basis,
//! which the fusion solver exploits.

use ndarray::Array2;
use rayon::prelude::*;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Centered blur kernel of odd support `(2r+1) x (2r+1)`, non-negative taps
/// summing to one, applied as a cyclic convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    taps: Array2<f64>,
    radius: usize,
}

impl BlurKernel {
    pub fn new(taps: Array2<f64>) -> Result<Self> {
        let (rows, cols) = taps.dim();
        if rows != cols || rows % 2 == 0 {
            return Err(Error::Parameter(format!(
                "kernel support must be odd square, got {}x{}",
                rows, cols
            )));
        }
        if taps.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Parameter("kernel taps must be finite and non-negative".into()));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("kernel taps sum to {}, expected 1", sum)));
        }
        Ok(Self { radius: rows / 2, taps })
    }

    /// The 1x1 identity kernel (no blur).
    pub fn identity() -> Self {
        Self { taps: Array2::from_elem((1, 1), 1.0), radius: 0 }
    }

    /// Sampled isotropic Gaussian, truncated at `radius` and normalized.
    pub fn gaussian(sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("gaussian sigma must be positive, got {}", sigma)));
        }
        if radius == 0 {
            return Err(Error::Parameter("gaussian radius must be >= 1".into()));
        }
        let size = 2 * radius + 1;
        let mut taps = Array2::zeros((size, size));
        for dy in -(radius as i64)..=radius as i64 {
            for dx in -(radius as i64)..=radius as i64 {
                let r2 = (dx * dx + dy * dy) as f64;
                taps[[(dy + radius as i64) as usize, (dx + radius as i64) as usize]] =
                    (-r2 / (2.0 * sigma * sigma)).exp();
            }
        }
        let sum: f64 = taps.iter().sum();
        taps.mapv_inplace(|t| t / sum);
        Ok(Self { radius, taps })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn support(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn taps(&self) -> &Array2<f64> {
        &self.taps
    }

    /// Taps reflected through the center; the adjoint of cyclic convolution
    /// is cyclic convolution with this kernel.
    pub fn point_reflected(&self) -> Self {
        let s = self.support();
        let mut taps = Array2::zeros((s, s));
        for a in 0..s {
            for b in 0..s {
                taps[[a, b]] = self.taps[[s - 1 - a, s - 1 - b]];
            }
        }
        Self { taps, radius: self.radius }
    }
}

/// Uniform decimation by `factor` on both axes, keeping pixels at positions
/// `phase + i * factor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decimation {
    factor: usize,
    phase: usize,
}

impl Decimation {
    pub fn new(factor: usize, phase: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Parameter("decimation factor must be >= 1".into()));
        }
        if phase >= factor {
            return Err(Error::Parameter(format!(
                "decimation phase {} must be in [0, {})",
                phase, factor
            )));
        }
        Ok(Self { factor, phase })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn coarse_dims(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        if width % self.factor != 0 || height % self.factor != 0 {
            return Err(Error::Dimension(format!(
                "decimation factor {} does not divide grid {}x{}",
                self.factor, width, height
            )));
        }
        Ok((width / self.factor, height / self.factor))
    }
}

/// Spectral response of the MS sensor: an `N_lambda x M_lambda` matrix whose
/// columns are normalized band responses (each sums to one).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    matrix: Array2<f64>,
}

impl SpectralResponse {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Dimension("spectral response must be non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter("spectral response entries must be finite and non-negative".into()));
        }
        for (j, col) in matrix.columns().into_iter().enumerate() {
            let sum: f64 = col.sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "spectral response column {} sums to {}, expected 1",
                    j, sum
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Builds a response from raw (unnormalized) columns, scaling each to
    /// sum one.
    pub fn normalized(mut matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter("spectral response entries must be finite and non-negative".into()));
        }
        for (j, mut col) in matrix.columns_mut().into_iter().enumerate() {
            let sum: f64 = col.sum();
            if sum <= 0.0 {
                return Err(Error::Parameter(format!("spectral response column {} sums to zero", j)));
            }
            col.mapv_inplace(|v| v / sum);
        }
        Self::new(matrix)
    }

    pub fn hs_bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ms_bands(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// The full degradation model relating a high-resolution reference to the
/// observed pair: spatial blur + decimation for the HS branch, spectral
/// projection for the MS branch.
#[derive(Debug, Clone)]
pub struct DegradationModel {
    pub kernel: BlurKernel,
    pub decimation: Decimation,
    pub response: SpectralResponse,
}

// ---------------------------------------------------------------------------
// Matrix-level operators (columns = bands, rows = pixels)
// ---------------------------------------------------------------------------

fn check_kernel_fits(k: &BlurKernel, width: usize, height: usize) -> Result<()> {
    if k.support() > width.min(height) {
        return Err(Error::Dimension(format!(
            "kernel support {} exceeds grid {}x{}",
            k.support(),
            width,
            height
        )));
    }
    Ok(())
}

/// Cyclically pads one band into a halo buffer of extent `(h+2r) x (w+2r)`.
fn pad_band(col: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    let pw = width + 2 * r;
    let ph = height + 2 * r;
    let mut padded = vec![0.0; pw * ph];
    for i in 0..ph {
        let y = (i as i64 - r as i64).rem_euclid(height as i64) as usize;
        for j in 0..pw {
            let x = (j as i64 - r as i64).rem_euclid(width as i64) as usize;
            padded[i * pw + j] = col[y * width + x];
        }
    }
    padded
}

/// Correlation of a padded band with `taps` (shared core of blur and its
/// adjoint).
fn correlate_band(padded: &[f64], taps: &Array2<f64>, width: usize, height: usize, r: usize) -> Vec<f64> {
    let pw = width + 2 * r;
    let s = 2 * r + 1;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for a in 0..s {
                let row = &padded[(y + a) * pw + x..(y + a) * pw + x + s];
                for b in 0..s {
                    acc += taps[[a, b]] * row[b];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn blur_mat_with(data: &Array2<f64>, width: usize, height: usize, taps: &Array2<f64>, r: usize) -> Array2<f64> {
    let n = width * height;
    let bands = data.ncols();
    let mut cols: Vec<Vec<f64>> = (0..bands)
        .map(|b| data.column(b).iter().copied().collect::<Vec<f64>>())
        .collect();
    cols.par_iter_mut().for_each(|col| {
        let padded = pad_band(col, width, height, r);
        *col = correlate_band(&padded, taps, width, height, r);
    });
    let mut out = Array2::zeros((n, bands));
    for (b, col) in cols.iter().enumerate() {
        for (p, v) in col.iter().enumerate() {
            out[[p, b]] = *v;
        }
    }
    out
}

/// Cyclic convolution of every band with the kernel.
pub fn blur_mat(data: &Array2<f64>, width: usize, height: usize, k: &BlurKernel) -> Array2<f64> {
    // Convolution = correlation with the point-reflected taps.
    blur_mat_with(data, width, height, &k.point_reflected().taps, k.radius())
}

/// Adjoint of [`blur_mat`] (correlation with the taps themselves).
pub fn blur_adjoint_mat(data: &Array2<f64>, width: usize, height: usize, k: &BlurKernel) -> Array2<f64> {
    blur_mat_with(data, width, height, &k.taps, k.radius())
}

pub fn downsample_mat(
    data: &Array2<f64>,
    width: usize,
    height: usize,
    s: &Decimation,
) -> Result<(Array2<f64>, usize, usize)> {
    let (cw, ch) = s.coarse_dims(width, height)?;
    let d = s.factor();
    let phase = s.phase();
    let mut out = Array2::zeros((cw * ch, data.ncols()));
    for j in 0..ch {
        for i in 0..cw {
            let src = (phase + j * d) * width + (phase + i * d);
            out.row_mut(j * cw + i).assign(&data.row(src));
        }
    }
    Ok((out, cw, ch))
}

pub fn upsample_zeros_mat(
    data: &Array2<f64>,
    coarse_w: usize,
    coarse_h: usize,
    s: &Decimation,
    fine_w: usize,
    fine_h: usize,
) -> Result<Array2<f64>> {
    if coarse_w * s.factor() != fine_w || coarse_h * s.factor() != fine_h {
        return Err(Error::Dimension(format!(
            "coarse {}x{} times factor {} does not give fine {}x{}",
            coarse_w,
            coarse_h,
            s.factor(),
            fine_w,
            fine_h
        )));
    }
    if data.nrows() != coarse_w * coarse_h {
        return Err(Error::Dimension(format!(
            "matrix has {} rows, coarse grid is {}x{}",
            data.nrows(),
            coarse_w,
            coarse_h
        )));
    }
    let d = s.factor();
    let phase = s.phase();
    let mut out = Array2::zeros((fine_w * fine_h, data.ncols()));
    for j in 0..coarse_h {
        for i in 0..coarse_w {
            let dst = (phase + j * d) * fine_w + (phase + i * d);
            out.row_mut(dst).assign(&data.row(j * coarse_w + i));
        }
    }
    Ok(out)
}

/// Cyclic first difference along x: `out(x,y) = in(x+1 mod W, y) - in(x,y)`.
pub fn diff_h_mat(data: &Array2<f64>, width: usize, height: usize) -> Array2<f64> {
    let mut out = Array2::zeros(data.raw_dim());
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let pn = y * width + (x + 1) % width;
            for c in 0..data.ncols() {
                out[[p, c]] = data[[pn, c]] - data[[p, c]];
            }
        }
    }
    out
}

/// Cyclic first difference along y: `out(x,y) = in(x, y+1 mod H) - in(x,y)`.
pub fn diff_v_mat(data: &Array2<f64>, width: usize, height: usize) -> Array2<f64> {
    let mut out = Array2::zeros(data.raw_dim());
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let pn = ((y + 1) % height) * width + x;
            for c in 0..data.ncols() {
                out[[p, c]] = data[[pn, c]] - data[[p, c]];
            }
        }
    }
    out
}

/// Adjoint of [`diff_h_mat`]: `out(x,y) = in(x-1 mod W, y) - in(x,y)`.
pub fn diff_h_adjoint_mat(data: &Array2<f64>, width: usize, height: usize) -> Array2<f64> {
    let mut out = Array2::zeros(data.raw_dim());
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let pp = y * width + (x + width - 1) % width;
            for c in 0..data.ncols() {
                out[[p, c]] = data[[pp, c]] - data[[p, c]];
            }
        }
    }
    out
}

/// Adjoint of [`diff_v_mat`]: `out(x,y) = in(x, y-1 mod H) - in(x,y)`.
pub fn diff_v_adjoint_mat(data: &Array2<f64>, width: usize, height: usize) -> Array2<f64> {
    let mut out = Array2::zeros(data.raw_dim());
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let pp = ((y + height - 1) % height) * width + x;
            for c in 0..data.ncols() {
                out[[p, c]] = data[[pp, c]] - data[[p, c]];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Cube-level operations
// ---------------------------------------------------------------------------

pub fn cyclic_blur(cube: &SpectralCube, k: &BlurKernel) -> Result<SpectralCube> {
    check_kernel_fits(k, cube.width(), cube.height())?;
    SpectralCube::new(blur_mat(cube.data(), cube.width(), cube.height(), k), cube.width(), cube.height())
}

pub fn cyclic_blur_adjoint(cube: &SpectralCube, k: &BlurKernel) -> Result<SpectralCube> {
    check_kernel_fits(k, cube.width(), cube.height())?;
    SpectralCube::new(
        blur_adjoint_mat(cube.data(), cube.width(), cube.height(), k),
        cube.width(),
        cube.height(),
    )
}

pub fn downsample(cube: &SpectralCube, s: &Decimation) -> Result<SpectralCube> {
    let (out, cw, ch) = downsample_mat(cube.data(), cube.width(), cube.height(), s)?;
    SpectralCube::new(out, cw, ch)
}

pub fn upsample_zeros(
    cube: &SpectralCube,
    s: &Decimation,
    fine_width: usize,
    fine_height: usize,
) -> Result<SpectralCube> {
    let out = upsample_zeros_mat(cube.data(), cube.width(), cube.height(), s, fine_width, fine_height)?;
    SpectralCube::new(out, fine_width, fine_height)
}

/// Projects the cube along the spectral axis: `out = data * R`.
pub fn spectral_project(cube: &SpectralCube, r: &SpectralResponse) -> Result<SpectralCube> {
    if cube.bands() != r.hs_bands() {
        return Err(Error::Dimension(format!(
            "cube has {} bands, response expects {}",
            cube.bands(),
            r.hs_bands()
        )));
    }
    SpectralCube::new(cube.data().dot(r.matrix()), cube.width(), cube.height())
}

pub fn diff_h(cube: &SpectralCube) -> SpectralCube {
    SpectralCube::new(diff_h_mat(cube.data(), cube.width(), cube.height()), cube.width(), cube.height())
        .expect("shape preserved")
}

pub fn diff_v(cube: &SpectralCube) -> SpectralCube {
    SpectralCube::new(diff_v_mat(cube.data(), cube.width(), cube.height()), cube.width(), cube.height())
        .expect("shape preserved")
}

pub fn diff_h_adjoint(cube: &SpectralCube) -> SpectralCube {
    SpectralCube::new(
        diff_h_adjoint_mat(cube.data(), cube.width(), cube.height()),
        cube.width(),
        cube.height(),
    )
    .expect("shape preserved")
}

pub fn diff_v_adjoint(cube: &SpectralCube) -> SpectralCube {
    SpectralCube::new(
        diff_v_adjoint_mat(cube.data(), cube.width(), cube.height()),
        cube.width(),
        cube.height(),
    )
    .expect("shape preserved")
}

/// Convenience alias matching the kernel constructor.
pub fn build_gaussian_kernel(sigma: f64, radius: usize) -> Result<BlurKernel> {
    BlurKernel::gaussian(sigma, radius)
}

/// Default simulation blur for decimation factor `d`: Gaussian with
/// `sigma = 1.7 * d / 4` truncated at radius `2d`.
pub fn default_blur_for_factor(d: usize) -> Result<BlurKernel> {
    if d == 1 {
        return Ok(BlurKernel::identity());
    }
    BlurKernel::gaussian(1.7 * d as f64 / 4.0, 2 * d)
}
