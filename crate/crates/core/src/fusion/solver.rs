//! Backends for the coefficient-update linear system
//! `((SK)^T SK + lambda I + rho (Dh^T Dh + Dv^T Dv)) C = E1`.
//!
//! The frequency-domain backend exploits that `K`, `Dh`, `Dv` are all
//! diagonalized by the 2-D DFT while `S^T S` couples exactly the `d^2`
//! frequencies that alias onto one coarse-grid frequency. On each such coset
//! the system matrix is "diagonal plus rank-one", so it is inverted in closed
//! form by the Sherman-Morrison identity (with a small dense solve as a
//! fallback for cosets whose diagonal degenerates, which can only happen when
//! `lambda = 0`).
//!
//! The matrix-free conjugate-gradient backend is the interchangeable
//! fallback; it shares nothing with the frequency path except the operator
//! definitions themselves.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::ops::DegradationOps;

/// Which backend solves the coefficient update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverBackend {
    #[default]
    Fft,
    Cg,
}

/// Right-hand-side pieces of the coefficient update. `E1` is assembled as
/// `data_term + rho * (Dh^T (U1 - G1) + Dv^T (U2 - G2))`.
pub struct CUpdateRhs<'a> {
    /// `(SK)^T Y_h Q^T + lambda * Y_mp Q_mp^T` (constant within one ADMM call).
    pub data_term: &'a Array2<f64>,
    pub u1_minus_g1: &'a Array2<f64>,
    pub u2_minus_g2: &'a Array2<f64>,
}

pub(crate) fn assemble_e1(ops: &DegradationOps, rhs: &CUpdateRhs<'_>, rho: f64) -> Array2<f64> {
    let mut e1 = ops.diff_h_adjoint(rhs.u1_minus_g1) + ops.diff_v_adjoint(rhs.u2_minus_g2);
    e1.mapv_inplace(|v| v * rho);
    e1 + rhs.data_term
}

/// Applies the system matrix `M = (SK)^T SK + lambda I + rho D^T D`
/// matrix-free through the spatial-domain operator path.
pub fn apply_system(ops: &DegradationOps, lambda: f64, rho: f64, x: &Array2<f64>) -> Array2<f64> {
    let mut out = ops.apply_sk_adjoint_spatial(&ops.apply_sk_spatial(x));
    out = out + ops.diff_h_adjoint(&ops.diff_h(x)).mapv(|v| v * rho);
    out = out + ops.diff_v_adjoint(&ops.diff_v(x)).mapv(|v| v * rho);
    out + x.mapv(|v| v * lambda)
}

/// Solves the coefficient update for every column of `E1`.
pub fn update_c_linear_solve(
    ops: &DegradationOps,
    rhs: &CUpdateRhs<'_>,
    lambda: f64,
    rho: f64,
    backend: SolverBackend,
) -> Result<Array2<f64>> {
    let e1 = assemble_e1(ops, rhs, rho);
    match backend {
        SolverBackend::Fft => FftCSolver::new(ops, lambda, rho)?.solve(&e1),
        SolverBackend::Cg => solve_cg(ops, lambda, rho, &e1),
    }
}

// ---------------------------------------------------------------------------
// Frequency-domain backend
// ---------------------------------------------------------------------------

/// Per-(lambda, rho) factorization state. The diagonal part and the
/// Sherman-Morrison denominators are the only quantities that depend on rho,
/// so re-preparation after a penalty update is an O(n) pass.
pub(crate) struct FftCSolver<'a> {
    ops: &'a DegradationOps,
    /// `lambda + rho * (4 sin^2(pi u / W) + 4 sin^2(pi v / H))` per frequency.
    dcoef: Vec<f64>,
    /// Sherman-Morrison denominator per coarse frequency coset.
    denom: Vec<f64>,
    /// Phase factors `exp(-2 pi i phase (k+l) / d)` indexed by `(k+l) mod d`.
    wtab: Vec<Complex64>,
    /// Cosets whose diagonal is too small for Sherman-Morrison.
    needs_dense: Vec<bool>,
}

impl<'a> FftCSolver<'a> {
    pub fn new(ops: &'a DegradationOps, lambda: f64, rho: f64) -> Result<Self> {
        if lambda < 0.0 || rho < 0.0 {
            return Err(Error::Parameter("lambda and rho must be non-negative".into()));
        }
        let (w, h) = (ops.width(), ops.height());
        let d = ops.decimation().factor();
        let phase = ops.decimation().phase();
        let (cw, ch) = ops.coarse_dims();
        let lamk = ops.kernel_spectrum();

        let mut dcoef = vec![0.0; w * h];
        for v in 0..h {
            let sv = (PI * v as f64 / h as f64).sin();
            for u in 0..w {
                let su = (PI * u as f64 / w as f64).sin();
                dcoef[v * w + u] = lambda + rho * 4.0 * (su * su + sv * sv);
            }
        }

        let wtab: Vec<Complex64> = (0..d)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * phase as f64 * j as f64 / d as f64))
            .collect();

        // A coset can use Sherman-Morrison only if its diagonal stays well
        // away from zero relative to the coset scale.
        let dd = (d * d) as f64;
        let mut denom = vec![0.0; cw * ch];
        let mut needs_dense = vec![false; cw * ch];
        for v0 in 0..ch {
            for u0 in 0..cw {
                let ci = v0 * cw + u0;
                let mut acc = 0.0;
                let mut dmin = f64::INFINITY;
                let mut dmax: f64 = 0.0;
                let mut umax: f64 = 0.0;
                for l in 0..d {
                    for k in 0..d {
                        let idx = (v0 + l * ch) * w + (u0 + k * cw);
                        let dval = dcoef[idx];
                        let u2 = lamk[idx].norm_sqr() / dd;
                        dmin = dmin.min(dval);
                        dmax = dmax.max(dval);
                        umax = umax.max(u2);
                        acc += u2 / dval; // may be inf/nan when dval == 0
                    }
                }
                if dmin <= 1e-12 * (dmax + umax) {
                    needs_dense[ci] = true;
                } else {
                    denom[ci] = 1.0 + acc;
                }
            }
        }
        Ok(Self { ops, dcoef, denom, wtab, needs_dense })
    }

    /// Applies the inverse to one column spectrum in place (`buf` holds the
    /// unnormalized forward FFT of an `E1` column).
    pub fn solve_spectrum(&self, buf: &mut [Complex64]) -> Result<()> {
        let w = self.ops.width();
        let d = self.ops.decimation().factor();
        let (cw, ch) = self.ops.coarse_dims();
        let lamk = self.ops.kernel_spectrum();
        let dd = d as f64;
        let mut idxs = vec![0usize; d * d];
        let mut uvec = vec![Complex64::default(); d * d];
        for v0 in 0..ch {
            for u0 in 0..cw {
                let ci = v0 * cw + u0;
                for l in 0..d {
                    for k in 0..d {
                        let idx = (v0 + l * ch) * w + (u0 + k * cw);
                        let t = l * d + k;
                        idxs[t] = idx;
                        uvec[t] = lamk[idx].conj() * self.wtab[(k + l) % d] / dd;
                    }
                }
                if self.needs_dense[ci] {
                    solve_coset_dense(buf, &idxs, &uvec, &self.dcoef)?;
                } else {
                    // (D + u u^H)^{-1} r via Sherman-Morrison.
                    let mut s = Complex64::default();
                    for t in 0..d * d {
                        s += uvec[t].conj() * buf[idxs[t]] / self.dcoef[idxs[t]];
                    }
                    let f = s / self.denom[ci];
                    for t in 0..d * d {
                        let idx = idxs[t];
                        buf[idx] = (buf[idx] - f * uvec[t]) / self.dcoef[idx];
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `M c = e1` column by column, exactly up to floating point.
    pub fn solve(&self, e1: &Array2<f64>) -> Result<Array2<f64>> {
        let fft = self.ops.fft();
        let cols: Vec<Result<Vec<f64>>> = (0..e1.ncols())
            .into_par_iter()
            .map(|c| {
                let mut scratch = crate::fft::Fft2Scratch::default();
                let mut buf: Vec<Complex64> =
                    e1.column(c).iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft.forward_with(&mut buf, &mut scratch);
                self.solve_spectrum(&mut buf)?;
                fft.inverse_with(&mut buf, &mut scratch);
                Ok(buf.into_iter().map(|v| v.re).collect())
            })
            .collect();

        let mut out = Array2::zeros(e1.raw_dim());
        for (c, col) in cols.into_iter().enumerate() {
            let col = col?;
            for (p, v) in col.into_iter().enumerate() {
                out[[p, c]] = v;
            }
        }
        Ok(out)
    }
}

/// Direct solve of one `d^2 x d^2` coset system `(diag(D) + u u^H) z = r`
/// by Gaussian elimination with partial pivoting. Needed only when the
/// diagonal degenerates (`lambda = 0`); reports a singular system otherwise.
fn solve_coset_dense(
    buf: &mut [Complex64],
    idxs: &[usize],
    uvec: &[Complex64],
    dcoef: &[f64],
) -> Result<()> {
    let n = idxs.len();
    let mut a = vec![Complex64::default(); n * n];
    let mut b = vec![Complex64::default(); n];
    let mut scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = uvec[i] * uvec[j].conj();
        }
        a[i * n + i] += dcoef[idxs[i]];
        scale = scale.max(a[i * n + i].norm());
        b[i] = buf[idxs[i]];
    }
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, a[r * n + col].norm()))
            .fold((col, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= 1e-14 * scale.max(1e-300) {
            return Err(Error::Solver(
                "singular coefficient system (lambda = 0 and blur spectrum vanishes)".into(),
            ));
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let inv = a[col * n + col].inv();
        for r in col + 1..n {
            let f = a[r * n + col] * inv;
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[r * n + j] -= f * v;
            }
            let bc = b[col];
            b[r] -= f * bc;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
    for (t, &idx) in idxs.iter().enumerate() {
        buf[idx] = b[t];
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Conjugate-gradient backend
// ---------------------------------------------------------------------------

const CG_RTOL: f64 = 1e-12;

fn solve_cg(ops: &DegradationOps, lambda: f64, rho: f64, e1: &Array2<f64>) -> Result<Array2<f64>> {
    if lambda < 0.0 || rho < 0.0 {
        return Err(Error::Parameter("lambda and rho must be non-negative".into()));
    }
    let n = ops.n_fine();
    let cap = 20 * n + 100;
    let cols: Vec<Result<Vec<f64>>> = (0..e1.ncols())
        .into_par_iter()
        .map(|c| {
            let b: Vec<f64> = e1.column(c).iter().copied().collect();
            cg_column(ops, lambda, rho, &b, cap)
        })
        .collect();
    let mut out = Array2::zeros(e1.raw_dim());
    for (c, col) in cols.into_iter().enumerate() {
        let col = col?;
        for (p, v) in col.into_iter().enumerate() {
            out[[p, c]] = v;
        }
    }
    Ok(out)
}

pub(crate) fn cg_column(ops: &DegradationOps, lambda: f64, rho: f64, b: &[f64], cap: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        let x = Array2::from_shape_vec((n, 1), v.to_vec()).expect("shape");
        apply_system(ops, lambda, rho, &x).column(0).to_vec()
    };
    let tol = CG_RTOL * bnorm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..cap {
        if rs.sqrt() <= tol {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Solver(format!(
                "cg breakdown: curvature {:.3e} (singular or indefinite system)",
                pap
            )));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rs.sqrt() <= 1e-8 * bnorm {
        // Stagnated within rounding of the target; accept.
        return Ok(x);
    }
    Err(Error::Solver(format!(
        "cg did not converge in {} iterations: relative residual {:.3e}",
        cap,
        rs.sqrt() / bnorm
    )))
}
