//! Subspace feature fusion by alternating optimization.
//!
//! The observed pair is modeled as `Y_h ~ S K C Q` and `Y_mp ~ C Q_mp` with
//! row-orthonormal bases `Q`, `Q_mp` and shared high-resolution coefficients
//! `C`. The joint objective
//!
//! ```text
//! J(C, Q) = 1/2 ||S K C Q - Y_h||_F^2 + lambda/2 ||C Q_mp - Y_mp||_F^2
//!           + lambda_tv * sum_i || [Dh C_i, Dv C_i] ||_{2,1}
//! ```
//!
//! is minimized by alternating a C-step and a Q-step: the C-subproblem is
//! solved by ADMM with variable splitting on the differences (the isotropic
//! TV prox is a per-pixel group soft threshold, and the inner linear system
//! is solved in the frequency domain), while the Q-subproblem is an
//! orthogonal Procrustes problem with a closed-form SVD solution. `Q_mp` is
//! fixed once at initialization.

mod ops;
mod solver;

pub use ops::DegradationOps;
pub use solver::{apply_system, update_c_linear_solve, CUpdateRhs, SolverBackend};

use ndarray::Array2;
use nalgebra::DMatrix;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};

use solver::FftCSolver;

// ---------------------------------------------------------------------------
// Configuration and state types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Number of fused features (subspace dimension).
    pub n_e: usize,
    /// Weight of the MS/profile fidelity term.
    pub lambda: f64,
    /// Weight of the TV penalty.
    pub lambda_tv: f64,
    /// Initial ADMM penalty.
    pub rho0: f64,
    /// Stop the outer loop when the relative change of `C` falls below this.
    pub eps_ao: f64,
    /// Stop the inner loop when both scaled residuals fall below this.
    pub eps_admm: f64,
    pub max_ao_iters: usize,
    pub max_admm_iters: usize,
    /// Residual balancing of the penalty between ADMM iterations.
    pub rho_adapt: bool,
    pub backend: SolverBackend,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            n_e: 16,
            lambda: 1.0,
            lambda_tv: 0.05,
            rho0: 1.0,
            eps_ao: 1e-4,
            eps_admm: 1e-4,
            max_ao_iters: 50,
            max_admm_iters: 500,
            rho_adapt: true,
            backend: SolverBackend::Fft,
        }
    }
}

impl FusionConfig {
    fn validate(&self) -> Result<()> {
        if self.n_e == 0 {
            return Err(Error::Parameter("n_e must be >= 1".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Parameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.lambda_tv < 0.0 {
            return Err(Error::Parameter("lambda_tv must be non-negative".into()));
        }
        if !(self.rho0 > 0.0) {
            return Err(Error::Parameter("rho0 must be positive".into()));
        }
        if !(self.eps_ao > 0.0) || !(self.eps_admm > 0.0) {
            return Err(Error::Parameter("stopping thresholds must be positive".into()));
        }
        if self.max_ao_iters == 0 || self.max_admm_iters == 0 {
            return Err(Error::Parameter("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Split variables and scaled duals of the ADMM inner loop, carried across
/// outer iterations for warm starting. `u1`/`u2` track `Dh C` / `Dv C`.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub u1: Array2<f64>,
    pub u2: Array2<f64>,
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
    pub rho: f64,
    /// Last relative primal residual.
    pub r_res: f64,
    /// Last relative dual residual.
    pub s_res: f64,
}

impl AdmmState {
    pub fn zeros(n: usize, k: usize, rho: f64) -> Self {
        Self {
            u1: Array2::zeros((n, k)),
            u2: Array2::zeros((n, k)),
            g1: Array2::zeros((n, k)),
            g2: Array2::zeros((n, k)),
            rho,
            r_res: f64::INFINITY,
            s_res: f64::INFINITY,
        }
    }
}

/// Estimated factors: coefficients plus the two row-orthonormal bases.
#[derive(Debug, Clone)]
pub struct SubspaceFactors {
    pub c: Array2<f64>,
    pub q: Array2<f64>,
    pub q_mp: Array2<f64>,
}

/// One outer-iteration diagnostics record.
#[derive(Debug, Clone, Copy)]
pub struct AoIterRecord {
    pub iter: usize,
    pub objective: f64,
    pub r_res: f64,
    pub s_res: f64,
    pub rho: f64,
    pub admm_iters: usize,
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub factors: SubspaceFactors,
    /// Objective value after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub admm_iter_counts: Vec<usize>,
    pub iterations: Vec<AoIterRecord>,
    pub converged: bool,
    pub width: usize,
    pub height: usize,
    /// Smallest singular value seen across Procrustes updates; values below
    /// 1e-12 indicate a degenerate cross-product.
    pub q_min_singular_value: f64,
}

impl FusionResult {
    pub fn q_degenerate(&self) -> bool {
        self.q_min_singular_value < 1e-12
    }
}

/// Result of one Procrustes basis update.
#[derive(Debug, Clone)]
pub struct ProcrustesUpdate {
    pub q: Array2<f64>,
    pub min_singular_value: f64,
}

impl ProcrustesUpdate {
    pub fn degenerate(&self) -> bool {
        self.min_singular_value < 1e-12
    }
}

// ---------------------------------------------------------------------------
// Subspace initialization and the Procrustes step
// ---------------------------------------------------------------------------

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Row-orthonormal basis of the dominant `n_e`-dimensional column subspace
/// of `Y^T Y`: the transposed top right singular vectors of the Gram matrix
/// (computed as a sorted symmetric eigendecomposition).
pub fn init_subspace(gram_source: &Array2<f64>, n_e: usize) -> Result<Array2<f64>> {
    let b = gram_source.ncols();
    if n_e == 0 {
        return Err(Error::Parameter("n_e must be >= 1".into()));
    }
    if n_e > b {
        return Err(Error::Parameter(format!(
            "n_e = {} exceeds the {} available bands",
            n_e, b
        )));
    }
    let gram = gram_source.t().dot(gram_source);
    let eig = nalgebra::SymmetricEigen::new(to_dmatrix(&gram));
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("finite eigenvalues")
    });
    let mut q = Array2::zeros((n_e, b));
    for (row, &idx) in order.iter().take(n_e).enumerate() {
        for col in 0..b {
            q[[row, col]] = eig.eigenvectors[(col, idx)];
        }
    }
    Ok(q)
}

/// Closed-form solution of `min_Q ||S K C Q - Y_h||_F` over row-orthonormal
/// `Q`: the polar factor `U V^T` of the thin SVD of `(S K C)^T Y_h`.
pub fn update_q_procrustes(
    c: &Array2<f64>,
    ops: &DegradationOps,
    y_h: &Array2<f64>,
) -> Result<ProcrustesUpdate> {
    if c.nrows() != ops.n_fine() {
        return Err(Error::Dimension(format!(
            "coefficients have {} rows, fine grid has {} pixels",
            c.nrows(),
            ops.n_fine()
        )));
    }
    if y_h.nrows() != ops.n_coarse() {
        return Err(Error::Dimension(format!(
            "HS image has {} rows, coarse grid has {} pixels",
            y_h.nrows(),
            ops.n_coarse()
        )));
    }
    let k = c.ncols();
    if k > y_h.ncols() {
        return Err(Error::Dimension(format!(
            "n_e = {} exceeds the {} HS bands",
            k,
            y_h.ncols()
        )));
    }
    let skc = ops.apply_sk(c);
    let cross = skc.t().dot(y_h);
    let svd = to_dmatrix(&cross).svd(true, true);
    let u = svd.u.as_ref().expect("requested u");
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    let qm = u * v_t;
    let mut q = Array2::zeros((k, y_h.ncols()));
    for i in 0..k {
        for j in 0..y_h.ncols() {
            q[[i, j]] = qm[(i, j)];
        }
    }
    let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ProcrustesUpdate { q, min_singular_value: min_sv })
}

// ---------------------------------------------------------------------------
// Objective and proximal pieces
// ---------------------------------------------------------------------------

/// Group soft threshold of one difference pair:
/// `x * max(||x|| - tau, 0) / (max(||x|| - tau, 0) + tau)`, with `0/0 = 0`.
pub fn vect_soft_pair(a: f64, b: f64, tau: f64) -> (f64, f64) {
    let norm = (a * a + b * b).sqrt();
    let m = (norm - tau).max(0.0);
    let denom = m + tau;
    let f = if denom > 0.0 { m / denom } else { 0.0 };
    (a * f, b * f)
}

/// Applies [`vect_soft_pair`] to every (pixel, feature) entry of the paired
/// difference matrices.
pub fn vect_soft_threshold(
    e2: &Array2<f64>,
    e3: &Array2<f64>,
    tau: f64,
) -> (Array2<f64>, Array2<f64>) {
    debug_assert_eq!(e2.raw_dim(), e3.raw_dim());
    let mut u1 = Array2::zeros(e2.raw_dim());
    let mut u2 = Array2::zeros(e3.raw_dim());
    for ((o1, o2), (a, b)) in u1.iter_mut().zip(u2.iter_mut()).zip(e2.iter().zip(e3.iter())) {
        let (x, y) = vect_soft_pair(*a, *b, tau);
        *o1 = x;
        *o2 = y;
    }
    (u1, u2)
}

/// The fused objective `J(C, Q)` (see the module docs).
#[allow(clippy::too_many_arguments)]
pub fn objective_j(
    c: &Array2<f64>,
    q: &Array2<f64>,
    q_mp: &Array2<f64>,
    y_h: &Array2<f64>,
    y_mp: &Array2<f64>,
    ops: &DegradationOps,
    lambda: f64,
    lambda_tv: f64,
) -> Result<f64> {
    if c.nrows() != ops.n_fine() || y_mp.nrows() != ops.n_fine() || y_h.nrows() != ops.n_coarse() {
        return Err(Error::Dimension("objective operand grids are inconsistent".into()));
    }
    if q.nrows() != c.ncols() || q.ncols() != y_h.ncols() {
        return Err(Error::Dimension("basis Q shape mismatch".into()));
    }
    if q_mp.nrows() != c.ncols() || q_mp.ncols() != y_mp.ncols() {
        return Err(Error::Dimension("basis Q_mp shape mismatch".into()));
    }
    let r_h = ops.apply_sk(c).dot(q) - y_h;
    let r_mp = c.dot(q_mp) - y_mp;
    let fit_h: f64 = 0.5 * r_h.iter().map(|v| v * v).sum::<f64>();
    let fit_mp: f64 = 0.5 * lambda * r_mp.iter().map(|v| v * v).sum::<f64>();
    let dhc = ops.diff_h(c);
    let dvc = ops.diff_v(c);
    let tv: f64 = dhc
        .iter()
        .zip(dvc.iter())
        .map(|(a, b)| (a * a + b * b).sqrt())
        .sum();
    Ok(fit_h + fit_mp + lambda_tv * tv)
}

/// Residual-balancing update of the ADMM penalty (and the matching rescale
/// of the scaled duals, which keeps `rho * G` invariant).
pub fn adapt_rho(mut state: AdmmState, mu: f64, tau_incr: f64, tau_decr: f64) -> AdmmState {
    if state.r_res > mu * state.s_res {
        state.rho *= tau_incr;
        state.g1.mapv_inplace(|v| v / tau_incr);
        state.g2.mapv_inplace(|v| v / tau_incr);
    } else if state.s_res > mu * state.r_res {
        state.rho /= tau_decr;
        state.g1.mapv_inplace(|v| v * tau_decr);
        state.g2.mapv_inplace(|v| v * tau_decr);
    }
    state
}

// ---------------------------------------------------------------------------
// ADMM inner loop
// ---------------------------------------------------------------------------

fn fro(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `num / den` with the convention that a vanishing denominator means the
/// quantity is trivially converged (covers the 0/0 case).
fn residual_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Outcome of one ADMM call: the coefficients plus the carried state.
pub struct AdmmOutcome {
    pub c: Array2<f64>,
    pub state: AdmmState,
    pub iterations: usize,
}

/// Per-column working set; columns are fully independent within one
/// iteration, so they run in parallel with preallocated flat buffers.
struct AdmmColumn {
    data_term: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    c: Vec<f64>,
    dhc: Vec<f64>,
    dvc: Vec<f64>,
    // Doubles as (U - G) before the solve and as (U_new - U_old) after.
    du1: Vec<f64>,
    du2: Vec<f64>,
    e1: Vec<f64>,
    cbuf: Vec<num_complex::Complex64>,
    fft_scratch: crate::fft::Fft2Scratch,
}

#[derive(Default, Clone, Copy)]
struct ColPartials {
    r_num2: f64,
    ac2: f64,
    bu2: f64,
    s_num2: f64,
    s_den2: f64,
}

fn admm_iterate_column(
    col: &mut AdmmColumn,
    ops: &DegradationOps,
    solver: Option<&FftCSolver<'_>>,
    lambda: f64,
    rho: f64,
    tau: f64,
) -> Result<ColPartials> {
    let (w, h) = (ops.width(), ops.height());
    let n = w * h;
    for p in 0..n {
        col.du1[p] = col.u1[p] - col.g1[p];
        col.du2[p] = col.u2[p] - col.g2[p];
    }
    // E1 = data_term + rho (Dh^T (U1-G1) + Dv^T (U2-G2)), stencils fused.
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let pl = y * w + (x + w - 1) % w;
            let pu = ((y + h - 1) % h) * w + x;
            col.e1[p] = col.data_term[p]
                + rho * ((col.du1[pl] - col.du1[p]) + (col.du2[pu] - col.du2[p]));
        }
    }
    match solver {
        Some(fft_solver) => {
            for p in 0..n {
                col.cbuf[p] = num_complex::Complex64::new(col.e1[p], 0.0);
            }
            ops.fft().forward_with(&mut col.cbuf, &mut col.fft_scratch);
            fft_solver.solve_spectrum(&mut col.cbuf)?;
            ops.fft().inverse_with(&mut col.cbuf, &mut col.fft_scratch);
            for p in 0..n {
                col.c[p] = col.cbuf[p].re;
            }
        }
        None => {
            col.c = solver::cg_column(ops, lambda, rho, &col.e1, 20 * n + 100)?;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            col.dhc[p] = col.c[y * w + (x + 1) % w] - col.c[p];
            col.dvc[p] = col.c[((y + 1) % h) * w + x] - col.c[p];
        }
    }
    let mut partials = ColPartials::default();
    for p in 0..n {
        let (u1n, u2n) = vect_soft_pair(col.dhc[p] + col.g1[p], col.dvc[p] + col.g2[p], tau);
        let d1 = col.dhc[p] - u1n;
        let d2 = col.dvc[p] - u2n;
        partials.r_num2 += d1 * d1 + d2 * d2;
        partials.ac2 += col.dhc[p] * col.dhc[p] + col.dvc[p] * col.dvc[p];
        partials.bu2 += u1n * u1n + u2n * u2n;
        col.du1[p] = u1n - col.u1[p];
        col.du2[p] = u2n - col.u2[p];
        col.g1[p] += d1;
        col.g2[p] += d2;
        col.u1[p] = u1n;
        col.u2[p] = u2n;
    }
    // Dual residual pieces: rho ||A^T B (U_new - U_old)|| against ||A^T G||.
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let pl = y * w + (x + w - 1) % w;
            let pu = ((y + h - 1) % h) * w + x;
            let sn = (col.du1[pl] - col.du1[p]) + (col.du2[pu] - col.du2[p]);
            partials.s_num2 += sn * sn;
            let sd = (col.g1[pl] - col.g1[p]) + (col.g2[pu] - col.g2[p]);
            partials.s_den2 += sd * sd;
        }
    }
    partials.s_num2 *= rho * rho;
    Ok(partials)
}

/// ADMM sub-iterations estimating `C` for a fixed basis `Q`.
///
/// `state` supplies the warm-started split variables, scaled duals and
/// penalty from the previous outer iteration (zeros at the first). The
/// returned state makes `k` iterations followed by another `k` bit-identical
/// to `2k` iterations in one call.
#[allow(clippy::too_many_arguments)]
pub fn admm_estimate_c(
    y_h: &Array2<f64>,
    y_mp: &Array2<f64>,
    ops: &DegradationOps,
    q_mp: &Array2<f64>,
    lambda: f64,
    lambda_tv: f64,
    q: &Array2<f64>,
    state: AdmmState,
    cfg: &FusionConfig,
) -> Result<AdmmOutcome> {
    use rayon::prelude::*;

    let n = ops.n_fine();
    let k = q.nrows();
    if state.u1.nrows() != n || state.u1.ncols() != k {
        return Err(Error::Dimension(format!(
            "ADMM state is {}x{}, expected {}x{}",
            state.u1.nrows(),
            state.u1.ncols(),
            n,
            k
        )));
    }
    // Constant part of the right-hand side for this outer iteration. Each
    // backend uses its own operator path end to end.
    let skt_yh_qt = match cfg.backend {
        SolverBackend::Fft => ops.apply_sk_adjoint(&y_h.dot(&q.t())),
        SolverBackend::Cg => ops.apply_sk_adjoint_spatial(&y_h.dot(&q.t())),
    };
    let data_term = skt_yh_qt + y_mp.dot(&q_mp.t()).mapv(|v| v * lambda);

    let col_vec = |m: &Array2<f64>, c: usize| -> Vec<f64> { m.column(c).iter().copied().collect() };
    let mut columns: Vec<AdmmColumn> = (0..k)
        .map(|c| AdmmColumn {
            data_term: col_vec(&data_term, c),
            u1: col_vec(&state.u1, c),
            u2: col_vec(&state.u2, c),
            g1: col_vec(&state.g1, c),
            g2: col_vec(&state.g2, c),
            c: vec![0.0; n],
            dhc: vec![0.0; n],
            dvc: vec![0.0; n],
            du1: vec![0.0; n],
            du2: vec![0.0; n],
            e1: vec![0.0; n],
            cbuf: vec![num_complex::Complex64::default(); n],
            fft_scratch: crate::fft::Fft2Scratch::default(),
        })
        .collect();

    let mut rho = state.rho;
    let mut r_res = state.r_res;
    let mut s_res = state.s_res;
    let mut iterations = 0;
    let mut fft_solver: Option<FftCSolver<'_>> = None;
    let mut solver_rho = f64::NAN;

    for _ in 0..cfg.max_admm_iters {
        if cfg.backend == SolverBackend::Fft && (fft_solver.is_none() || solver_rho != rho) {
            fft_solver = Some(FftCSolver::new(ops, lambda, rho)?);
            solver_rho = rho;
        }
        let tau = lambda_tv / rho;
        let solver_ref = fft_solver.as_ref();
        let partials: Vec<Result<ColPartials>> = columns
            .par_iter_mut()
            .map(|col| admm_iterate_column(col, ops, solver_ref, lambda, rho, tau))
            .collect();
        // Reduce in fixed column order.
        let mut total = ColPartials::default();
        for p in partials {
            let p = p?;
            total.r_num2 += p.r_num2;
            total.ac2 += p.ac2;
            total.bu2 += p.bu2;
            total.s_num2 += p.s_num2;
            total.s_den2 += p.s_den2;
        }
        let r_den = total.ac2.sqrt().max(total.bu2.sqrt());
        r_res = residual_ratio(total.r_num2.sqrt(), r_den);
        s_res = residual_ratio(total.s_num2.sqrt(), total.s_den2.sqrt());
        iterations += 1;

        if r_res < cfg.eps_admm && s_res < cfg.eps_admm {
            break;
        }
        if cfg.rho_adapt {
            if r_res > 10.0 * s_res {
                rho *= 2.0;
                for col in columns.iter_mut() {
                    for v in col.g1.iter_mut() {
                        *v /= 2.0;
                    }
                    for v in col.g2.iter_mut() {
                        *v /= 2.0;
                    }
                }
            } else if s_res > 10.0 * r_res {
                rho /= 2.0;
                for col in columns.iter_mut() {
                    for v in col.g1.iter_mut() {
                        *v *= 2.0;
                    }
                    for v in col.g2.iter_mut() {
                        *v *= 2.0;
                    }
                }
            }
        }
    }

    let mut c = Array2::zeros((n, k));
    let mut out_state = AdmmState::zeros(n, k, rho);
    for (ci, col) in columns.iter().enumerate() {
        for p in 0..n {
            c[[p, ci]] = col.c[p];
            out_state.u1[[p, ci]] = col.u1[p];
            out_state.u2[[p, ci]] = col.u2[p];
            out_state.g1[[p, ci]] = col.g1[p];
            out_state.g2[[p, ci]] = col.g2[p];
        }
    }
    out_state.r_res = r_res;
    out_state.s_res = s_res;
    Ok(AdmmOutcome { c, state: out_state, iterations })
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

/// Relative change `||C_t - C_{t-1}|| / ||C_{t-1}||`. A step away from the
/// zero start counts as change 1, so very loose thresholds stop after one
/// iteration and all-zero problems converge immediately.
fn relative_change(c: &Array2<f64>, prev: Option<&Array2<f64>>) -> f64 {
    match prev {
        Some(p) => {
            let num = c
                .iter()
                .zip(p.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den = fro(p);
            if den > 0.0 {
                num / den
            } else if num == 0.0 {
                0.0
            } else {
                1.0
            }
        }
        None => {
            if fro(c) == 0.0 {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// Full alternating-optimization fusion: initializes both bases from Gram
/// SVDs, then alternates the warm-started ADMM coefficient step with the
/// Procrustes basis step until the coefficients stabilize.
pub fn ao_fuse(
    y_h: &Array2<f64>,
    y_mp: &Array2<f64>,
    ops: &DegradationOps,
    cfg: &FusionConfig,
) -> Result<FusionResult> {
    cfg.validate()?;
    if y_h.nrows() != ops.n_coarse() {
        return Err(Error::Dimension(format!(
            "HS image has {} rows but the coarse grid has {} pixels (n = d^2 m?)",
            y_h.nrows(),
            ops.n_coarse()
        )));
    }
    if y_mp.nrows() != ops.n_fine() {
        return Err(Error::Dimension(format!(
            "profile matrix has {} rows but the fine grid has {} pixels",
            y_mp.nrows(),
            ops.n_fine()
        )));
    }
    if cfg.n_e > y_h.ncols().min(y_mp.ncols()) {
        return Err(Error::Parameter(format!(
            "n_e = {} exceeds min(N_lambda, M_mp) = {}",
            cfg.n_e,
            y_h.ncols().min(y_mp.ncols())
        )));
    }

    let mut q = init_subspace(y_h, cfg.n_e)?;
    let q_mp = init_subspace(y_mp, cfg.n_e)?;
    let mut state = AdmmState::zeros(ops.n_fine(), cfg.n_e, cfg.rho0);

    let mut c_prev: Option<Array2<f64>> = None;
    let mut objective_trace = Vec::new();
    let mut admm_iter_counts = Vec::new();
    let mut iterations = Vec::new();
    let mut converged = false;
    let mut q_min_sv = f64::INFINITY;
    let mut c_final = Array2::zeros((ops.n_fine(), cfg.n_e));

    for t in 1..=cfg.max_ao_iters {
        let outcome =
            admm_estimate_c(y_h, y_mp, ops, &q_mp, cfg.lambda, cfg.lambda_tv, &q, state, cfg)?;
        state = outcome.state;
        let c = outcome.c;

        let proc = update_q_procrustes(&c, ops, y_h)?;
        q = proc.q;
        q_min_sv = q_min_sv.min(proc.min_singular_value);

        let j = objective_j(&c, &q, &q_mp, y_h, y_mp, ops, cfg.lambda, cfg.lambda_tv)?;
        if !j.is_finite() {
            return Err(Error::Solver(format!("objective diverged at outer iteration {}", t)));
        }
        let rel = relative_change(&c, c_prev.as_ref());
        objective_trace.push(j);
        admm_iter_counts.push(outcome.iterations);
        iterations.push(AoIterRecord {
            iter: t,
            objective: j,
            r_res: state.r_res,
            s_res: state.s_res,
            rho: state.rho,
            admm_iters: outcome.iterations,
            rel_change: rel,
        });
        c_prev = Some(c.clone());
        c_final = c;
        if rel < cfg.eps_ao {
            converged = true;
            break;
        }
    }

    Ok(FusionResult {
        factors: SubspaceFactors { c: c_final, q, q_mp },
        objective_trace,
        admm_iter_counts,
        iterations,
        converged,
        width: ops.width(),
        height: ops.height(),
        q_min_singular_value: q_min_sv,
    })
}

/// Wraps the estimated coefficients as an `n x N_e` feature cube on the fine
/// grid, column order preserved.
pub fn fused_features(result: &FusionResult) -> SpectralCube {
    SpectralCube::new(result.factors.c.clone(), result.width, result.height)
        .expect("coefficient shape matches the fine grid")
}

#[cfg(test)]
mod tests;
