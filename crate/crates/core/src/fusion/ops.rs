//! Cached degradation operator bundle used by the fusion solver.
//!
//! Bundles the blur kernel and decimation for one fine grid, with the
//! kernel's 2-D DFT precomputed so repeated blur applications inside the
//! solver run in the frequency domain. The slower spatial-domain paths are
//! kept alongside: the conjugate-gradient backend uses them, which also makes
//! the two solver backends exercise independent blur implementations.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::imgops::{
    blur_adjoint_mat, blur_mat, diff_h_adjoint_mat, diff_h_mat, diff_v_adjoint_mat, diff_v_mat,
    downsample_mat, upsample_zeros_mat, BlurKernel, Decimation,
};

pub struct DegradationOps {
    width: usize,
    height: usize,
    kernel: BlurKernel,
    decimation: Decimation,
    kernel_spectrum: Vec<Complex64>,
    fft: Fft2,
}

impl DegradationOps {
    pub fn new(width: usize, height: usize, kernel: BlurKernel, decimation: Decimation) -> Result<Self> {
        decimation.coarse_dims(width, height)?;
        if kernel.support() > width.min(height) {
            return Err(Error::Dimension(format!(
                "kernel support {} exceeds grid {}x{}",
                kernel.support(),
                width,
                height
            )));
        }
        // Embed the centered taps into the grid with cyclic wrap and take the
        // unnormalized DFT; these are the eigenvalues of the convolution.
        let mut embedded = vec![Complex64::default(); width * height];
        let r = kernel.radius() as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let y = dy.rem_euclid(height as i64) as usize;
                let x = dx.rem_euclid(width as i64) as usize;
                embedded[y * width + x] +=
                    kernel.taps()[[(dy + r) as usize, (dx + r) as usize]];
            }
        }
        let fft = Fft2::new(width, height);
        fft.forward(&mut embedded);
        Ok(Self { width, height, kernel, decimation, kernel_spectrum: embedded, fft })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_fine(&self) -> usize {
        self.width * self.height
    }

    pub fn coarse_dims(&self) -> (usize, usize) {
        self.decimation
            .coarse_dims(self.width, self.height)
            .expect("validated at construction")
    }

    pub fn n_coarse(&self) -> usize {
        let (cw, ch) = self.coarse_dims();
        cw * ch
    }

    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    pub fn decimation(&self) -> &Decimation {
        &self.decimation
    }

    pub(crate) fn kernel_spectrum(&self) -> &[Complex64] {
        &self.kernel_spectrum
    }

    pub(crate) fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Frequency-domain cyclic blur of each column (adjoint uses the
    /// conjugate spectrum).
    fn blur_freq(&self, data: &Array2<f64>, adjoint: bool) -> Array2<f64> {
        let n = self.n_fine();
        debug_assert_eq!(data.nrows(), n);
        let cols: Vec<Vec<f64>> = (0..data.ncols())
            .into_par_iter()
            .map(|c| {
                let mut buf: Vec<Complex64> =
                    data.column(c).iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.fft.forward(&mut buf);
                for (b, k) in buf.iter_mut().zip(self.kernel_spectrum.iter()) {
                    *b *= if adjoint { k.conj() } else { *k };
                }
                self.fft.inverse(&mut buf);
                buf.into_iter().map(|v| v.re).collect()
            })
            .collect();
        let mut out = Array2::zeros(data.raw_dim());
        for (c, col) in cols.iter().enumerate() {
            for (p, v) in col.iter().enumerate() {
                out[[p, c]] = *v;
            }
        }
        out
    }

    /// `SK x`: blur then decimate, frequency-domain blur.
    pub fn apply_sk(&self, x: &Array2<f64>) -> Array2<f64> {
        let blurred = self.blur_freq(x, false);
        let (out, _, _) = downsample_mat(&blurred, self.width, self.height, &self.decimation)
            .expect("validated at construction");
        out
    }

    /// `(SK)^T y`: zero-fill interpolation then adjoint blur.
    pub fn apply_sk_adjoint(&self, y: &Array2<f64>) -> Array2<f64> {
        let (cw, ch) = self.coarse_dims();
        let up = upsample_zeros_mat(y, cw, ch, &self.decimation, self.width, self.height)
            .expect("validated at construction");
        self.blur_freq(&up, true)
    }

    /// Spatial-domain `SK x` (used by the CG backend and equivalence tests).
    pub fn apply_sk_spatial(&self, x: &Array2<f64>) -> Array2<f64> {
        let blurred = blur_mat(x, self.width, self.height, &self.kernel);
        let (out, _, _) = downsample_mat(&blurred, self.width, self.height, &self.decimation)
            .expect("validated at construction");
        out
    }

    /// Spatial-domain `(SK)^T y`.
    pub fn apply_sk_adjoint_spatial(&self, y: &Array2<f64>) -> Array2<f64> {
        let (cw, ch) = self.coarse_dims();
        let up = upsample_zeros_mat(y, cw, ch, &self.decimation, self.width, self.height)
            .expect("validated at construction");
        blur_adjoint_mat(&up, self.width, self.height, &self.kernel)
    }

    pub fn diff_h(&self, x: &Array2<f64>) -> Array2<f64> {
        diff_h_mat(x, self.width, self.height)
    }

    pub fn diff_v(&self, x: &Array2<f64>) -> Array2<f64> {
        diff_v_mat(x, self.width, self.height)
    }

    pub fn diff_h_adjoint(&self, x: &Array2<f64>) -> Array2<f64> {
        diff_h_adjoint_mat(x, self.width, self.height)
    }

    pub fn diff_v_adjoint(&self, x: &Array2<f64>) -> Array2<f64> {
        diff_v_adjoint_mat(x, self.width, self.height)
    }
}
