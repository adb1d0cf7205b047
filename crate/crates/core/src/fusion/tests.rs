use approx::assert_abs_diff_eq;
use ndarray::Array2;
use rand::Rng;

use super::*;
use crate::imgops::{BlurKernel, Decimation};

fn rand_mat(r: usize, c: usize, seed: u64) -> Array2<f64> {
    let mut rng = crate::rng::rng_from_seed(seed);
    Array2::from_shape_fn((r, c), |_| rng.random::<f64>() * 2.0 - 1.0)
}

/// Random matrix with orthonormal rows (k x b, k <= b) via QR.
fn rand_row_orthonormal(k: usize, b: usize, seed: u64) -> Array2<f64> {
    let g = to_dmatrix(&rand_mat(b, k, seed));
    let qr = g.qr();
    let q = qr.q();
    Array2::from_shape_fn((k, b), |(i, j)| q[(j, i)])
}

fn fro_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn identity_ops(w: usize, h: usize) -> DegradationOps {
    DegradationOps::new(w, h, BlurKernel::identity(), Decimation::new(1, 0).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// init_subspace
// ---------------------------------------------------------------------------

#[test]
fn init_subspace_orthogonal_columns() {
    // Columns are orthogonal with distinct norms: the basis rows are the
    // normalized columns in norm order.
    let mut y = Array2::zeros((6, 3));
    y[[0, 0]] = 2.0; // norm 2
    y[[1, 1]] = 5.0; // norm 5
    y[[2, 2]] = 3.0; // norm 3
    let q = init_subspace(&y, 2).unwrap();
    assert_abs_diff_eq!(q[[0, 1]].abs(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(q[[1, 2]].abs(), 1.0, epsilon = 1e-12);
}

#[test]
fn init_subspace_full_basis_is_orthonormal() {
    let y = rand_mat(20, 5, 3);
    let q = init_subspace(&y, 5).unwrap();
    let qqt = q.dot(&q.t());
    for i in 0..5 {
        for j in 0..5 {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(qqt[[i, j]], expect, epsilon = 1e-10);
        }
    }
}

#[test]
fn init_subspace_matches_svd_oracle() {
    // Independent oracle: thin SVD of Y itself (right singular vectors).
    let y = rand_mat(50, 8, 4);
    let q = init_subspace(&y, 3).unwrap();
    let svd = to_dmatrix(&y).svd(true, true);
    let v_t = svd.v_t.unwrap();
    // Compare up to per-row sign.
    for r in 0..3 {
        let mut dot = 0.0;
        for j in 0..8 {
            dot += q[[r, j]] * v_t[(r, j)];
        }
        let sign = dot.signum();
        for j in 0..8 {
            assert_abs_diff_eq!(q[[r, j]], sign * v_t[(r, j)], epsilon = 1e-8);
        }
    }
}

#[test]
fn init_subspace_rejects_ne_above_band_count() {
    let y = rand_mat(10, 4, 5);
    assert!(matches!(init_subspace(&y, 5), Err(Error::Parameter(_))));
}

// ---------------------------------------------------------------------------
// vect-soft threshold
// ---------------------------------------------------------------------------

#[test]
fn vect_soft_examples() {
    // tau = 0 is the identity.
    assert_eq!(vect_soft_pair(1.5, -2.0, 0.0), (1.5, -2.0));
    assert_eq!(vect_soft_pair(0.0, 0.0, 0.0), (0.0, 0.0));
    // Full shrinkage below the threshold.
    assert_eq!(vect_soft_pair(0.3, 0.4, 0.5), (0.0, 0.0));
    assert_eq!(vect_soft_pair(0.3, 0.4, 2.0), (0.0, 0.0));
    // (3,4) with tau 2: factor 3/5.
    let (a, b) = vect_soft_pair(3.0, 4.0, 2.0);
    assert_abs_diff_eq!(a, 1.8, epsilon = 1e-15);
    assert_abs_diff_eq!(b, 2.4, epsilon = 1e-15);
}

#[test]
fn vect_soft_is_the_group_prox() {
    // The output must minimize tau*||u|| + 1/2*||u - x||^2. The minimizer is
    // collinear with x, so ternary-search the objective along that ray.
    let cases = [(3.0, 4.0, 2.0), (0.2, -0.1, 0.05), (-1.0, 2.0, 0.0), (0.5, 0.5, 5.0)];
    for &(a, b, tau) in &cases {
        let norm = f64::hypot(a, b);
        let objective = |t: f64| tau * t + 0.5 * (t - norm) * (t - norm);
        let (mut lo, mut hi) = (0.0, norm + 2.0 * tau + 1.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if objective(m1) < objective(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let t_star = 0.5 * (lo + hi);
        let (sa, sb) = vect_soft_pair(a, b, tau);
        assert_abs_diff_eq!(f64::hypot(sa, sb), t_star, epsilon = 1e-6);
    }
}

// ---------------------------------------------------------------------------
// objective
// ---------------------------------------------------------------------------

#[test]
fn objective_zero_cases() {
    let ops = identity_ops(4, 4);
    let c = Array2::zeros((16, 2));
    let q = rand_row_orthonormal(2, 5, 1);
    let q_mp = rand_row_orthonormal(2, 3, 2);
    let y_h = Array2::zeros((16, 5));
    let y_mp = Array2::zeros((16, 3));
    let j = objective_j(&c, &q, &q_mp, &y_h, &y_mp, &ops, 1.0, 0.3).unwrap();
    assert_eq!(j, 0.0);

    // Perfect low-rank data with lambda_tv = 0.
    let c = rand_mat(16, 2, 3);
    let y_h = c.dot(&q);
    let y_mp = c.dot(&q_mp);
    let j = objective_j(&c, &q, &q_mp, &y_h, &y_mp, &ops, 2.0, 0.0).unwrap();
    assert!(j < 1e-20);
}

#[test]
fn objective_tv_term_matches_direct_sum() {
    let ops = identity_ops(4, 4);
    // One coefficient column with a horizontal gradient; TV term equals the
    // hand-computed sum of per-pixel row norms.
    let mut c = Array2::zeros((16, 1));
    for y in 0..4 {
        for x in 0..4 {
            c[[y * 4 + x, 0]] = x as f64;
        }
    }
    let q = rand_row_orthonormal(1, 2, 7);
    let q_mp = rand_row_orthonormal(1, 2, 8);
    let y_h = c.dot(&q);
    let y_mp = c.dot(&q_mp);
    let lambda_tv = 0.7;
    let j = objective_j(&c, &q, &q_mp, &y_h, &y_mp, &ops, 1.0, lambda_tv).unwrap();
    // Differences along x per row: 1,1,1,-3 and zero along y; row norms sum
    // to (1+1+1+3) per grid row.
    let expected_tv = 4.0 * 6.0;
    assert_abs_diff_eq!(j, lambda_tv * expected_tv, epsilon = 1e-10);
}

// ---------------------------------------------------------------------------
// Procrustes update
// ---------------------------------------------------------------------------

fn test_ops_8x4() -> DegradationOps {
    DegradationOps::new(
        8,
        4,
        BlurKernel::gaussian(0.9, 1).unwrap(),
        Decimation::new(2, 0).unwrap(),
    )
    .unwrap()
}

#[test]
fn procrustes_exact_recovery() {
    let ops = test_ops_8x4();
    let c = rand_mat(32, 3, 11);
    let q0 = rand_row_orthonormal(3, 6, 12);
    let y_h = ops.apply_sk(&c).dot(&q0);
    let upd = update_q_procrustes(&c, &ops, &y_h).unwrap();
    assert!(fro_err(&upd.q, &q0) < 1e-10);
    assert!(!upd.degenerate());
}

#[test]
fn procrustes_rank_one_is_normalized_cross_product() {
    let ops = test_ops_8x4();
    let c = rand_mat(32, 1, 21);
    let y_h = rand_mat(8, 5, 22);
    let upd = update_q_procrustes(&c, &ops, &y_h).unwrap();
    let cross = ops.apply_sk(&c).t().dot(&y_h);
    let norm: f64 = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
    for j in 0..5 {
        assert_abs_diff_eq!(upd.q[[0, j]], cross[[0, j]] / norm, epsilon = 1e-12);
    }
}

#[test]
fn procrustes_beats_random_orthonormal_samples() {
    let ops = test_ops_8x4();
    let c = rand_mat(32, 2, 31);
    let y_h = rand_mat(8, 4, 32);
    let upd = update_q_procrustes(&c, &ops, &y_h).unwrap();
    let skc = ops.apply_sk(&c);
    let fit = |q: &Array2<f64>| -> f64 {
        let r = skc.dot(q) - &y_h;
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let best = fit(&upd.q);
    for seed in 0..1000 {
        assert!(best <= fit(&rand_row_orthonormal(2, 4, 10_000 + seed)) + 1e-12);
    }
}

#[test]
fn procrustes_monotonicity() {
    // For fixed C the update never worsens the HS fit.
    let ops = test_ops_8x4();
    let c = rand_mat(32, 2, 41);
    let y_h = rand_mat(8, 5, 42);
    let skc = ops.apply_sk(&c);
    let fit = |q: &Array2<f64>| -> f64 {
        let r = skc.dot(q) - &y_h;
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let upd = update_q_procrustes(&c, &ops, &y_h).unwrap();
    for seed in 0..20 {
        let q_old = rand_row_orthonormal(2, 5, 500 + seed);
        assert!(fit(&upd.q) <= fit(&q_old) + 1e-12);
    }
}

#[test]
fn procrustes_flags_degenerate_cross_product() {
    let ops = test_ops_8x4();
    let c = Array2::zeros((32, 2));
    let y_h = rand_mat(8, 4, 51);
    let upd = update_q_procrustes(&c, &ops, &y_h).unwrap();
    assert!(upd.degenerate());
    // Still row-orthonormal.
    let qqt = upd.q.dot(&upd.q.t());
    assert_abs_diff_eq!(qqt[[0, 0]], 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(qqt[[0, 1]], 0.0, epsilon = 1e-10);
}

// ---------------------------------------------------------------------------
// rho adaptation
// ---------------------------------------------------------------------------

#[test]
fn adapt_rho_rules() {
    let mut state = AdmmState::zeros(4, 1, 2.0);
    state.g1.fill(1.0);
    state.r_res = 0.5;
    state.s_res = 0.5;
    let state = adapt_rho(state, 10.0, 2.0, 2.0);
    assert_eq!(state.rho, 2.0);
    assert_eq!(state.g1[[0, 0]], 1.0);

    let mut state2 = state.clone();
    state2.r_res = 50.0 * state2.s_res;
    let before = state2.rho * state2.g1[[0, 0]];
    let state2 = adapt_rho(state2, 10.0, 2.0, 2.0);
    assert_eq!(state2.rho, 4.0);
    assert_eq!(state2.g1[[0, 0]], 0.5);
    // rho * G invariant under adaptation.
    assert_abs_diff_eq!(state2.rho * state2.g1[[0, 0]], before, epsilon = 1e-15);

    let mut state3 = state2.clone();
    state3.s_res = 100.0 * state3.r_res.max(1e-12);
    state3.r_res = state3.s_res / 100.0;
    let state3 = adapt_rho(state3, 10.0, 2.0, 2.0);
    assert_eq!(state3.rho, 2.0);
    assert_eq!(state3.g1[[0, 0]], 1.0);
}

// ---------------------------------------------------------------------------
// ADMM inner loop
// ---------------------------------------------------------------------------

struct SmallProblem {
    ops: DegradationOps,
    y_h: Array2<f64>,
    y_mp: Array2<f64>,
    q: Array2<f64>,
    q_mp: Array2<f64>,
}

/// A 16x16 two-region scene degraded to an 8x8 HS image, with a 4-column
/// high-resolution side.
fn two_region_problem(n_e: usize) -> SmallProblem {
    let (w, h) = (16, 16);
    let n_bands = 5;
    let mut reference = Array2::zeros((w * h, n_bands));
    let mut rng = crate::rng::rng_from_seed(77);
    let sig_a: Vec<f64> = (0..n_bands).map(|_| 0.5 + rng.random::<f64>()).collect();
    let sig_b: Vec<f64> = (0..n_bands).map(|_| 0.5 + rng.random::<f64>()).collect();
    for y in 0..h {
        for x in 0..w {
            let sig = if x < w / 2 { &sig_a } else { &sig_b };
            for b in 0..n_bands {
                reference[[y * w + x, b]] = sig[b] * (1.0 + 0.05 * ((x + y) as f64 / 31.0));
            }
        }
    }
    let ops = DegradationOps::new(
        w,
        h,
        BlurKernel::gaussian(0.85, 2).unwrap(),
        Decimation::new(2, 0).unwrap(),
    )
    .unwrap();
    let y_h = ops.apply_sk(&reference);
    // High-resolution side: first 4 bands of the reference.
    let y_mp = {
        let mut m = Array2::zeros((w * h, 4));
        for p in 0..w * h {
            for b in 0..4 {
                m[[p, b]] = reference[[p, b]];
            }
        }
        m
    };
    let q = init_subspace(&y_h, n_e).unwrap();
    let q_mp = init_subspace(&y_mp, n_e).unwrap();
    SmallProblem { ops, y_h, y_mp, q, q_mp }
}

#[test]
fn admm_no_tv_converges_in_one_iteration_to_closed_form() {
    let p = two_region_problem(2);
    let cfg = FusionConfig {
        n_e: 2,
        lambda: 0.8,
        lambda_tv: 0.0,
        rho0: 1.0,
        eps_admm: 1e-4,
        max_admm_iters: 100,
        ..FusionConfig::default()
    };
    let state = AdmmState::zeros(p.ops.n_fine(), 2, cfg.rho0);
    let out = admm_estimate_c(
        &p.y_h, &p.y_mp, &p.ops, &p.q_mp, cfg.lambda, cfg.lambda_tv, &p.q, state, &cfg,
    )
    .unwrap();
    assert_eq!(out.iterations, 1);

    // Matches the closed-form solve with the same (zero) warm start.
    let data_term = p.ops.apply_sk_adjoint(&p.y_h.dot(&p.q.t()))
        + p.y_mp.dot(&p.q_mp.t()).mapv(|v| v * cfg.lambda);
    let zero = Array2::zeros((p.ops.n_fine(), 2));
    let rhs = CUpdateRhs { data_term: &data_term, u1_minus_g1: &zero, u2_minus_g2: &zero };
    let direct =
        update_c_linear_solve(&p.ops, &rhs, cfg.lambda, cfg.rho0, SolverBackend::Fft).unwrap();
    assert!(fro_err(&out.c, &direct) < 1e-8);
    // U tracks the differences exactly, duals stay at zero.
    assert!(fro_err(&out.state.u1, &p.ops.diff_h(&out.c)) < 1e-12);
    assert!(out.state.g1.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn admm_constant_data_converges_immediately() {
    // Single-band constant data keeps every internal product exact, so the
    // CG backend produces an exactly constant C and the differences,
    // residuals and TV term are exact zeros already at iteration 1.
    let ops = identity_ops(6, 6);
    let y_h = Array2::from_elem((36, 1), 2.0);
    let y_mp = Array2::from_elem((36, 1), 1.0);
    let q = Array2::from_elem((1, 1), 1.0);
    let q_mp = Array2::from_elem((1, 1), 1.0);
    let cfg = FusionConfig {
        n_e: 1,
        lambda: 1.0,
        lambda_tv: 0.1,
        backend: SolverBackend::Cg,
        ..FusionConfig::default()
    };
    let state = AdmmState::zeros(36, 1, cfg.rho0);
    let out =
        admm_estimate_c(&y_h, &y_mp, &ops, &q_mp, cfg.lambda, cfg.lambda_tv, &q, state, &cfg)
            .unwrap();
    assert_eq!(out.iterations, 1);
    assert_eq!(out.state.r_res, 0.0);
    assert_eq!(out.state.s_res, 0.0);
    // Spatially constant coefficients.
    let first = out.c[[0, 0]];
    for v in out.c.column(0).iter() {
        assert_eq!(*v, first);
    }

    // The frequency backend agrees up to roundoff and still converges fast.
    let cfg_fft = FusionConfig { backend: SolverBackend::Fft, ..cfg };
    let out_fft = admm_estimate_c(
        &y_h,
        &y_mp,
        &ops,
        &q_mp,
        cfg_fft.lambda,
        cfg_fft.lambda_tv,
        &q,
        AdmmState::zeros(36, 1, cfg_fft.rho0),
        &cfg_fft,
    )
    .unwrap();
    assert!(out_fft.iterations <= 3);
    for v in out_fft.c.column(0).iter() {
        assert_abs_diff_eq!(*v, first, epsilon = 1e-10);
    }
}

/// Smoothed-TV Nesterov reference solver for the C-subproblem, run to high
/// precision. Independent of the ADMM path (first-order only).
#[allow(clippy::too_many_arguments)]
fn reference_c_solver(
    y_h: &Array2<f64>,
    y_mp: &Array2<f64>,
    ops: &DegradationOps,
    q: &Array2<f64>,
    q_mp: &Array2<f64>,
    lambda: f64,
    lambda_tv: f64,
    eps: f64,
    max_iters: usize,
) -> Array2<f64> {
    let n = ops.n_fine();
    let k = q.nrows();
    // Lipschitz bound: ||(SK)^T SK|| <= 1, Q Q^T = I, plus the smoothed TV
    // curvature 8/eps; strong convexity mu >= lambda.
    let l = 1.0 + lambda + lambda_tv * 8.0 / eps;
    let mu = lambda;
    let kappa = l / mu;
    let beta = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let step = 1.0 / l;

    let grad = |c: &Array2<f64>| -> Array2<f64> {
        let r_h = ops.apply_sk(c).dot(q) - y_h;
        let g_h = ops.apply_sk_adjoint(&r_h.dot(&q.t()));
        let r_mp = c.dot(q_mp) - y_mp;
        let g_mp = r_mp.dot(&q_mp.t()).mapv(|v| v * lambda);
        let dhc = ops.diff_h(c);
        let dvc = ops.diff_v(c);
        let mut wh = Array2::zeros((n, k));
        let mut wv = Array2::zeros((n, k));
        for ((a, b), (oh, ov)) in
            dhc.iter().zip(dvc.iter()).zip(wh.iter_mut().zip(wv.iter_mut()))
        {
            let denom = (a * a + b * b + eps * eps).sqrt();
            *oh = a / denom;
            *ov = b / denom;
        }
        let g_tv =
            (ops.diff_h_adjoint(&wh) + ops.diff_v_adjoint(&wv)).mapv(|v| v * lambda_tv);
        g_h + g_mp + g_tv
    };

    let mut c = Array2::zeros((n, k));
    let mut momentum = c.clone();
    let mut g0_norm = None;
    for _ in 0..max_iters {
        let g = grad(&momentum);
        let gn = fro(&g);
        let g0 = *g0_norm.get_or_insert(gn.max(1e-300));
        if gn <= 1e-12 * g0 {
            break;
        }
        let c_next = &momentum - &g.mapv(|v| v * step);
        momentum = &c_next + &(&c_next - &c).mapv(|v| v * beta);
        c = c_next;
    }
    c
}

#[test]
fn admm_matches_reference_proximal_solver_on_objective() {
    let p = two_region_problem(2);
    let lambda = 1.0;
    let lambda_tv = 0.08;
    let cfg = FusionConfig {
        n_e: 2,
        lambda,
        lambda_tv,
        rho0: 1.0,
        eps_admm: 1e-10,
        max_admm_iters: 20_000,
        rho_adapt: true,
        ..FusionConfig::default()
    };
    let state = AdmmState::zeros(p.ops.n_fine(), 2, cfg.rho0);
    let out =
        admm_estimate_c(&p.y_h, &p.y_mp, &p.ops, &p.q_mp, lambda, lambda_tv, &p.q, state, &cfg)
            .unwrap();

    let c_ref = reference_c_solver(
        &p.y_h, &p.y_mp, &p.ops, &p.q, &p.q_mp, lambda, lambda_tv, 1e-7, 200_000,
    );
    let j_admm =
        objective_j(&out.c, &p.q, &p.q_mp, &p.y_h, &p.y_mp, &p.ops, lambda, lambda_tv).unwrap();
    let j_ref =
        objective_j(&c_ref, &p.q, &p.q_mp, &p.y_h, &p.y_mp, &p.ops, lambda, lambda_tv).unwrap();
    let rel = (j_admm - j_ref).abs() / j_ref.abs();
    assert!(rel < 1e-4, "objective mismatch: admm {} vs reference {} (rel {})", j_admm, j_ref, rel);
}

#[test]
fn admm_residuals_fall_below_tolerance() {
    let p = two_region_problem(3);
    let cfg = FusionConfig {
        n_e: 3,
        lambda: 1.0,
        lambda_tv: 0.05,
        rho0: 1.0,
        eps_admm: 1e-4,
        max_admm_iters: 500,
        ..FusionConfig::default()
    };
    let state = AdmmState::zeros(p.ops.n_fine(), 3, cfg.rho0);
    let out = admm_estimate_c(&p.y_h, &p.y_mp, &p.ops, &p.q_mp, 1.0, 0.05, &p.q, state, &cfg)
        .unwrap();
    assert!(out.iterations < 500, "hit the iteration cap");
    assert!(out.state.r_res < 1e-4);
    assert!(out.state.s_res < 1e-4);
}

#[test]
fn admm_warm_start_resumes_bit_identically() {
    let p = two_region_problem(2);
    let mk_cfg = |iters: usize| FusionConfig {
        n_e: 2,
        lambda: 1.0,
        lambda_tv: 0.05,
        rho0: 1.0,
        eps_admm: 1e-300, // never triggers: run the full budget
        max_admm_iters: iters,
        rho_adapt: true,
        ..FusionConfig::default()
    };
    let k = 12;
    let full = admm_estimate_c(
        &p.y_h,
        &p.y_mp,
        &p.ops,
        &p.q_mp,
        1.0,
        0.05,
        &p.q,
        AdmmState::zeros(p.ops.n_fine(), 2, 1.0),
        &mk_cfg(2 * k),
    )
    .unwrap();
    let half = admm_estimate_c(
        &p.y_h,
        &p.y_mp,
        &p.ops,
        &p.q_mp,
        1.0,
        0.05,
        &p.q,
        AdmmState::zeros(p.ops.n_fine(), 2, 1.0),
        &mk_cfg(k),
    )
    .unwrap();
    let resumed = admm_estimate_c(
        &p.y_h, &p.y_mp, &p.ops, &p.q_mp, 1.0, 0.05, &p.q, half.state, &mk_cfg(k),
    )
    .unwrap();
    let diff = full
        .c
        .iter()
        .zip(resumed.c.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(diff <= 1e-12, "resume deviates by {}", diff);
    assert_eq!(full.state.rho, resumed.state.rho);
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

#[test]
fn ao_fuse_loose_threshold_runs_one_iteration() {
    let p = two_region_problem(2);
    let cfg = FusionConfig {
        n_e: 2,
        lambda: 1.0,
        lambda_tv: 0.05,
        eps_ao: 10.0,
        ..FusionConfig::default()
    };
    let res = ao_fuse(&p.y_h, &p.y_mp, &p.ops, &cfg).unwrap();
    assert_eq!(res.objective_trace.len(), 1);
    assert!(res.converged);
}

#[test]
fn ao_fuse_all_zero_inputs_converges_to_zero() {
    let ops = identity_ops(4, 4);
    let y_h = Array2::zeros((16, 4));
    let y_mp = Array2::zeros((16, 3));
    let cfg = FusionConfig { n_e: 2, ..FusionConfig::default() };
    let res = ao_fuse(&y_h, &y_mp, &ops, &cfg).unwrap();
    assert!(res.converged);
    assert_eq!(res.objective_trace.len(), 1);
    assert!(res.factors.c.iter().all(|v| *v == 0.0));
}

#[test]
fn ao_fuse_dimension_mismatch_is_rejected() {
    let p = two_region_problem(2);
    let cfg = FusionConfig { n_e: 2, ..FusionConfig::default() };
    let bad_y_h = rand_mat(60, 5, 1); // not the coarse pixel count
    assert!(matches!(ao_fuse(&bad_y_h, &p.y_mp, &p.ops, &cfg), Err(Error::Dimension(_))));
    let bad_ne = FusionConfig { n_e: 40, ..cfg };
    assert!(matches!(ao_fuse(&p.y_h, &p.y_mp, &p.ops, &bad_ne), Err(Error::Parameter(_))));
}

#[test]
fn ao_fuse_recovers_planted_subspace_product() {
    // d = 1, K = I, no TV, data generated exactly from planted factors: the
    // product C Q is identifiable and must be recovered to 1e-6.
    let (w, h) = (16, 16);
    let n = w * h;
    let (n_e, n_bands, m_mp) = (3, 6, 8);
    let ops = identity_ops(w, h);
    let c_star = {
        // Random coefficients with orthonormal columns, scaled.
        let g = to_dmatrix(&rand_mat(n, n_e, 91));
        let qr = g.qr();
        let qm = qr.q();
        Array2::from_shape_fn((n, n_e), |(i, j)| 3.0 * qm[(i, j)])
    };
    let q_star = rand_row_orthonormal(n_e, n_bands, 92);
    let q_mp_star = rand_row_orthonormal(n_e, m_mp, 93);
    let y_h = c_star.dot(&q_star);
    let y_mp = c_star.dot(&q_mp_star);

    let cfg = FusionConfig {
        n_e,
        lambda: 1.0,
        lambda_tv: 0.0,
        rho0: 1e-3,
        eps_ao: 1e-10,
        eps_admm: 1e-8,
        max_ao_iters: 400,
        max_admm_iters: 50,
        rho_adapt: false,
        backend: SolverBackend::Fft,
    };
    let res = ao_fuse(&y_h, &y_mp, &ops, &cfg).unwrap();
    let product = res.factors.c.dot(&res.factors.q);
    let target = c_star.dot(&q_star);
    let rel = fro_err(&product, &target);
    assert!(rel <= 1e-6, "planted recovery error {}", rel);
}

#[test]
fn ao_fuse_objective_monotone_within_slack() {
    let p = two_region_problem(3);
    let cfg = FusionConfig {
        n_e: 3,
        lambda: 1.0,
        lambda_tv: 0.05,
        eps_ao: 1e-7,
        max_ao_iters: 20,
        ..FusionConfig::default()
    };
    let res = ao_fuse(&p.y_h, &p.y_mp, &p.ops, &cfg).unwrap();
    assert!(res.objective_trace.len() > 2);
    for w in res.objective_trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-6), "objective rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn ao_fuse_maintains_orthonormal_bases_and_fixed_q_mp() {
    let p = two_region_problem(2);
    let cfg = FusionConfig { n_e: 2, eps_ao: 1e-6, max_ao_iters: 8, ..FusionConfig::default() };
    let res = ao_fuse(&p.y_h, &p.y_mp, &p.ops, &cfg).unwrap();
    let check_ortho = |q: &Array2<f64>| {
        let qqt = q.dot(&q.t());
        for i in 0..q.nrows() {
            for j in 0..q.nrows() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qqt[[i, j]] - expect).abs() <= 1e-10);
            }
        }
    };
    check_ortho(&res.factors.q);
    check_ortho(&res.factors.q_mp);
    // Q_mp is computed once at initialization and never updated.
    let q_mp0 = init_subspace(&p.y_mp, 2).unwrap();
    assert_eq!(res.factors.q_mp, q_mp0);
}

#[test]
fn fused_features_shape_and_round_trip() {
    let p = two_region_problem(3);
    let cfg = FusionConfig { n_e: 3, eps_ao: 1e-3, max_ao_iters: 4, ..FusionConfig::default() };
    let res = ao_fuse(&p.y_h, &p.y_mp, &p.ops, &cfg).unwrap();
    let cube = fused_features(&res);
    assert_eq!((cube.width(), cube.height(), cube.bands()), (16, 16, 3));
    // Column order preserved from C.
    for p_idx in [0usize, 17, 255] {
        for b in 0..3 {
            assert_eq!(cube.data()[[p_idx, b]], res.factors.c[[p_idx, b]]);
        }
    }
}
