//! Minimal 2-D FFT on row-major grids, shared by the fusion solver.
//!
//! Columns are handled by transposing, running row transforms, and
//! transposing back, which keeps every FFT pass on contiguous memory. The
//! `_with` variants take caller-owned scratch so hot loops can reuse
//! allocations.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached forward/inverse plans for one `height x width` grid.
pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    fwd_w: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
    fwd_h: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
}

/// Reusable work buffers for one grid.
pub(crate) struct Fft2Scratch {
    tmp: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl Fft2Scratch {
    fn ensure(&mut self, n: usize, scratch_len: usize) {
        if self.tmp.len() < n {
            self.tmp.resize(n, Complex64::default());
        }
        if self.fft_scratch.len() < scratch_len {
            self.fft_scratch.resize(scratch_len, Complex64::default());
        }
    }
}

impl Default for Fft2Scratch {
    fn default() -> Self {
        Self { tmp: Vec::new(), fft_scratch: Vec::new() }
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            fwd_w: planner.plan_fft_forward(width),
            inv_w: planner.plan_fft_inverse(width),
            fwd_h: planner.plan_fft_forward(height),
            inv_h: planner.plan_fft_inverse(height),
        }
    }

    fn transform(&self, buf: &mut [Complex64], scratch: &mut Fft2Scratch, forward: bool) {
        let n = self.width * self.height;
        debug_assert_eq!(buf.len(), n);
        let (row_fft, col_fft) = if forward {
            (&self.fwd_w, &self.fwd_h)
        } else {
            (&self.inv_w, &self.inv_h)
        };
        let need = row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len());
        scratch.ensure(n, need);
        for row in buf.chunks_exact_mut(self.width) {
            row_fft.process_with_scratch(row, &mut scratch.fft_scratch);
        }
        transpose(buf, self.height, self.width, &mut scratch.tmp[..n]);
        for col in scratch.tmp[..n].chunks_exact_mut(self.height) {
            col_fft.process_with_scratch(col, &mut scratch.fft_scratch);
        }
        transpose(&scratch.tmp[..n], self.width, self.height, buf);
    }

    /// Unnormalized forward transform in place.
    pub fn forward_with(&self, buf: &mut [Complex64], scratch: &mut Fft2Scratch) {
        self.transform(buf, scratch, true);
    }

    /// Inverse transform scaled by `1/n`, so `inverse(forward(x)) == x`.
    pub fn inverse_with(&self, buf: &mut [Complex64], scratch: &mut Fft2Scratch) {
        self.transform(buf, scratch, false);
        let scale = 1.0 / (self.width * self.height) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward_with(buf, &mut Fft2Scratch::default());
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse_with(buf, &mut Fft2Scratch::default());
    }
}
