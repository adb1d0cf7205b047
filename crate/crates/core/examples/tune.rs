// Scratch driver for sizing the comparative experiment.

use std::time::Instant;

use featfuse::eval::ClassifierKind;
use featfuse::fusion::FusionConfig;
use featfuse::pipeline::{
    prepare_clean_scene, run_method_trials, ExperimentConfig, FeatureMethod,
};
use featfuse::synth::SceneSpec;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let ne: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let max_admm: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(500);
    let max_ao: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50);
    let eps_ao: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let cfg = ExperimentConfig {
        scene: SceneSpec { seed: 42, ..SceneSpec::default() },
        d: 4,
        m_bands: 5,
        snr_h_db: 30.0,
        snr_m_db: 40.0,
        radii: vec![1, 2, 4, 8],
        fusion: FusionConfig {
            n_e: ne,
            lambda,
            lambda_tv: 0.05,
            max_admm_iters: max_admm,
            max_ao_iters: max_ao,
            eps_ao,
            ..FusionConfig::default()
        },
        per_class: 50,
        n_trials: trials,
        base_seed: 100,
        classifier: ClassifierKind::KernelPoly3,
        ..ExperimentConfig::default()
    };
    let t0 = Instant::now();
    let clean = prepare_clean_scene(&cfg).unwrap();
    eprintln!("clean scene: {:.1}s", t0.elapsed().as_secs_f64());

    // Detailed fusion telemetry on the first trial.
    {
        use featfuse::eval::{compute_metrics, predict, sample_training, train_classifier};
        use featfuse::fusion::{init_subspace, DegradationOps};
        use featfuse::morphology::build_morphological_profile;
        use featfuse::pipeline::{interp_hs_bilinear, noisy_observation};
        use featfuse::SpectralCube;

        let (y_h, y_m) = noisy_observation(&clean, &cfg, cfg.base_seed).unwrap();
        let t = Instant::now();
        let mp = build_morphological_profile(&y_m, &cfg.radii).unwrap();
        eprintln!("profile: {:.1}s ({} cols)", t.elapsed().as_secs_f64(), mp.data().ncols());
        let t = Instant::now();
        let res = featfuse::pipeline::fuse_observation(
            &y_h,
            &y_m,
            &clean.model.kernel,
            &clean.model.decimation,
            &cfg.radii,
            &cfg.fusion,
        )
        .unwrap();
        eprintln!(
            "fuse: {:.1}s, ao_iters {}, admm per ao {:?}, converged {}",
            t.elapsed().as_secs_f64(),
            res.objective_trace.len(),
            res.admm_iter_counts,
            res.converged
        );
        eprintln!("objective trace: {:?}", res.objective_trace);

        // Objective decomposition at the final iterate.
        let ops = DegradationOps::new(
            y_m.width(),
            y_m.height(),
            clean.model.kernel.clone(),
            *&clean.model.decimation,
        )
        .unwrap();
        let skc = ops.apply_sk(&res.factors.c);
        let r_h = skc.dot(&res.factors.q) - y_h.data();
        let fit_h: f64 = 0.5 * r_h.iter().map(|v| v * v).sum::<f64>();
        let r_mp = res.factors.c.dot(&res.factors.q_mp) - mp.data();
        let fit_mp: f64 = 0.5 * cfg.fusion.lambda * r_mp.iter().map(|v| v * v).sum::<f64>();
        let dhc = ops.diff_h(&res.factors.c);
        let dvc = ops.diff_v(&res.factors.c);
        let tv: f64 = dhc.iter().zip(dvc.iter()).map(|(a, b)| (a * a + b * b).sqrt()).sum();
        eprintln!(
            "objective parts: fit_h {:.1} fit_mp {:.1} tv(term) {:.1}",
            fit_h,
            fit_mp,
            cfg.fusion.lambda_tv * tv
        );

        // Oracle: interpolated HS projected onto the init subspace at
        // several dimensions, to locate the class info in the spectrum.
        let hs_up = interp_hs_bilinear(&y_h, &clean.model.decimation, y_m.width(), y_m.height())
            .unwrap();
        let masks = sample_training(&clean.truth, cfg.per_class, 777).unwrap();
        for ne_probe in [6, 8, 10, 12, 16, 24] {
            let q0 = init_subspace(y_h.data(), ne_probe).unwrap();
            let proj = hs_up.data().dot(&q0.t());
            let proj_cube = SpectralCube::new(proj, y_m.width(), y_m.height()).unwrap();
            let model =
                train_classifier(&proj_cube, &clean.truth, &masks.train, cfg.classifier).unwrap();
            let pred = predict(&model, &proj_cube).unwrap();
            let rep = compute_metrics(&pred, &clean.truth, &masks.test).unwrap();
            eprintln!("oracle hs-interp @ {:2} dims: oa {:.4}", ne_probe, rep.overall_accuracy);
        }
        // Eigenvalue profile of the HS Gram.
        {
            let gram = y_h.data().t().dot(y_h.data());
            let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(
                gram.nrows(),
                gram.ncols(),
                |i, j| gram[[i, j]],
            ));
            let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            eprintln!("top-16 gram eigenvalues: {:?}", &ev[..16]);
        }
    }
    for method in [
        FeatureMethod::Fused,
        FeatureMethod::MsRaw,
        FeatureMethod::HsInterp,
        FeatureMethod::StackedPca,
    ] {
        let t = Instant::now();
        let rep = run_method_trials(method, &clean, &cfg).unwrap();
        eprintln!(
            "{:12} oa_mean {:.4} +- {:.4}  aa {:.4} kappa {:.4}  [{:.1}s]",
            method.name(),
            rep.oa_mean,
            rep.oa_std,
            rep.aa_mean,
            rep.kappa_mean,
            t.elapsed().as_secs_f64()
        );
    }
}
