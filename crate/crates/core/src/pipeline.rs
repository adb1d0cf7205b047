//! End-to-end experiment orchestration.
//!
//! Wires the simulation, fusion and evaluation stages into the two
//! experiment shapes used for validation: comparative runs (the fused
//! features against single-sensor and stacked-PCA baselines under one fixed
//! classifier) and mean-accuracy sweeps over the subspace dimension and TV
//! weight. Clean scenes are prepared once; trials redraw observation noise
//! and training pixels. All trials of every sweep cell share the same
//! per-trial seeds, so cells are paired comparisons and concurrency cannot
//! change any result.

use std::collections::BTreeMap;
use std::sync::mpsc;

use ndarray::Array2;

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::eval::{run_trials, ClassifierKind, MetricsReport};
use crate::fusion::{ao_fuse, fused_features, DegradationOps, FusionConfig, FusionResult};
use crate::imgops::{default_blur_for_factor, BlurKernel, Decimation, DegradationModel};
use crate::morphology::build_morphological_profile;
use crate::rng::{derive_seed, tags};
use crate::synth::{add_noise_snr, generate_scene, make_ikonos_like_response, wald_degrade, SceneSpec};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything one experiment needs: the scene, the degradation, the fusion
/// settings and the classification protocol.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    pub d: usize,
    pub phase: usize,
    /// Blur width; `None` picks the default for the decimation factor.
    pub sigma_blur: Option<f64>,
    pub kernel_radius: Option<usize>,
    /// MS band count of the synthetic response.
    pub m_bands: usize,
    pub snr_h_db: f64,
    pub snr_m_db: f64,
    /// Morphological profile radii (empty = raw MS bands).
    pub radii: Vec<usize>,
    pub fusion: FusionConfig,
    pub per_class: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub classifier: ClassifierKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            d: 4,
            phase: 0,
            sigma_blur: None,
            kernel_radius: None,
            m_bands: 5,
            snr_h_db: 30.0,
            snr_m_db: 40.0,
            radii: vec![1, 2, 4, 8],
            fusion: FusionConfig::default(),
            per_class: 50,
            n_trials: 10,
            base_seed: 0,
            classifier: ClassifierKind::KernelPoly3,
        }
    }
}

impl ExperimentConfig {
    pub fn blur_kernel(&self) -> Result<BlurKernel> {
        match (self.sigma_blur, self.kernel_radius) {
            (None, None) => default_blur_for_factor(self.d),
            (sigma, radius) => {
                let d = self.d;
                let sigma = sigma.unwrap_or(1.7 * d as f64 / 4.0);
                let radius = radius.unwrap_or(2 * d);
                if radius == 0 || !(sigma > 0.0) {
                    BlurKernel::gaussian(sigma, radius.max(1))
                } else {
                    BlurKernel::gaussian(sigma, radius)
                }
            }
        }
    }

    pub fn degradation_model(&self) -> Result<DegradationModel> {
        Ok(DegradationModel {
            kernel: self.blur_kernel()?,
            decimation: Decimation::new(self.d, self.phase)?,
            response: make_ikonos_like_response(self.scene.n_bands, self.m_bands)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Clean scene and per-trial observations
// ---------------------------------------------------------------------------

/// Scene, truth and noise-free observations, computed once per experiment.
#[derive(Debug, Clone)]
pub struct CleanScene {
    pub reference: SpectralCube,
    pub truth: LabelMap,
    pub y_h_clean: SpectralCube,
    pub y_m_clean: SpectralCube,
    pub model: DegradationModel,
}

pub fn prepare_clean_scene(cfg: &ExperimentConfig) -> Result<CleanScene> {
    let model = cfg.degradation_model()?;
    let (reference, truth) = generate_scene(&cfg.scene)?;
    let (y_h_clean, y_m_clean) = wald_degrade(&reference, &model)?;
    Ok(CleanScene { reference, truth, y_h_clean, y_m_clean, model })
}

/// Noise redraw for one trial.
pub fn noisy_observation(
    clean: &CleanScene,
    cfg: &ExperimentConfig,
    trial_seed: u64,
) -> Result<(SpectralCube, SpectralCube)> {
    let y_h = add_noise_snr(&clean.y_h_clean, cfg.snr_h_db, derive_seed(trial_seed, tags::NOISE_H))?;
    let y_m = add_noise_snr(&clean.y_m_clean, cfg.snr_m_db, derive_seed(trial_seed, tags::NOISE_M))?;
    Ok((y_h, y_m))
}

// ---------------------------------------------------------------------------
// Feature extraction methods
// ---------------------------------------------------------------------------

/// The feature sets compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMethod {
    /// Subspace-fused coefficients.
    Fused,
    /// The MS bands as-is.
    MsRaw,
    /// The HS cube bilinearly interpolated to the fine grid.
    HsInterp,
    /// PCA of the stacked (interpolated HS, MS) cube, same dimension as
    /// the fused features.
    StackedPca,
}

impl FeatureMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMethod::Fused => "fused",
            FeatureMethod::MsRaw => "ms-raw",
            FeatureMethod::HsInterp => "hs-interp",
            FeatureMethod::StackedPca => "stacked-pca",
        }
    }
}

/// Bilinear interpolation of a coarse cube back to the fine grid, treating
/// coarse pixels as samples at their decimation positions and replicating
/// beyond the first/last sample.
pub fn interp_hs_bilinear(
    y_h: &SpectralCube,
    decimation: &Decimation,
    fine_width: usize,
    fine_height: usize,
) -> Result<SpectralCube> {
    let d = decimation.factor();
    let phase = decimation.phase() as f64;
    if y_h.width() * d != fine_width || y_h.height() * d != fine_height {
        return Err(Error::Dimension(format!(
            "coarse {}x{} times {} does not give fine {}x{}",
            y_h.width(),
            y_h.height(),
            d,
            fine_width,
            fine_height
        )));
    }
    let (cw, ch) = (y_h.width(), y_h.height());
    let mut data = Array2::zeros((fine_width * fine_height, y_h.bands()));
    for y in 0..fine_height {
        let fy = ((y as f64 - phase) / d as f64).clamp(0.0, (ch - 1) as f64);
        let y0 = (fy.floor() as usize).min(ch.saturating_sub(2));
        let y0 = y0.min(ch - 1);
        let y1 = (y0 + 1).min(ch - 1);
        let ty = (fy - y0 as f64).clamp(0.0, 1.0);
        for x in 0..fine_width {
            let fx = ((x as f64 - phase) / d as f64).clamp(0.0, (cw - 1) as f64);
            let x0 = (fx.floor() as usize).min(cw - 1);
            let x1 = (x0 + 1).min(cw - 1);
            let tx = (fx - x0 as f64).clamp(0.0, 1.0);
            let p = y * fine_width + x;
            for b in 0..y_h.bands() {
                let v00 = y_h.data()[[y0 * cw + x0, b]];
                let v01 = y_h.data()[[y0 * cw + x1, b]];
                let v10 = y_h.data()[[y1 * cw + x0, b]];
                let v11 = y_h.data()[[y1 * cw + x1, b]];
                data[[p, b]] = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01)
                    + ty * ((1.0 - tx) * v10 + tx * v11);
            }
        }
    }
    SpectralCube::new(data, fine_width, fine_height)
}

/// Centered PCA projection onto the top `n_e` principal directions.
pub fn pca_features(data: &Array2<f64>, n_e: usize) -> Result<Array2<f64>> {
    let b = data.ncols();
    if n_e == 0 || n_e > b {
        return Err(Error::Parameter(format!("pca dimension {} out of range 1..={}", n_e, b)));
    }
    let n = data.nrows() as f64;
    let mut centered = data.clone();
    for mut col in centered.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
    let cov = centered.t().dot(&centered);
    let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(b, b, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("finite"));
    let mut basis = Array2::zeros((b, n_e));
    for (col, &idx) in order.iter().take(n_e).enumerate() {
        for row in 0..b {
            basis[[row, col]] = eig.eigenvectors[(row, idx)];
        }
    }
    Ok(centered.dot(&basis))
}

/// Runs the subspace fusion on one observation pair: builds the
/// morphological profile of the MS image, then alternates ADMM and
/// Procrustes updates. Grid consistency (`n = d^2 m`) is checked up front.
pub fn fuse_observation(
    y_h: &SpectralCube,
    y_m: &SpectralCube,
    kernel: &BlurKernel,
    decimation: &Decimation,
    radii: &[usize],
    fusion: &FusionConfig,
) -> Result<FusionResult> {
    let (cw, ch) = decimation.coarse_dims(y_m.width(), y_m.height())?;
    if (y_h.width(), y_h.height()) != (cw, ch) {
        return Err(Error::Parameter(format!(
            "HS grid {}x{} does not match MS grid {}x{} under decimation factor {} (expected {}x{})",
            y_h.width(),
            y_h.height(),
            y_m.width(),
            y_m.height(),
            decimation.factor(),
            cw,
            ch
        )));
    }
    let profile = build_morphological_profile(y_m, radii)?;
    let ops = DegradationOps::new(y_m.width(), y_m.height(), kernel.clone(), *decimation)?;
    ao_fuse(y_h.data(), profile.data(), &ops, fusion)
}

/// Extracts the features of one method from one noisy observation pair.
pub fn features_for_method(
    method: FeatureMethod,
    clean: &CleanScene,
    y_h: &SpectralCube,
    y_m: &SpectralCube,
    cfg: &ExperimentConfig,
) -> Result<SpectralCube> {
    match method {
        FeatureMethod::MsRaw => Ok(y_m.clone()),
        FeatureMethod::HsInterp => interp_hs_bilinear(
            y_h,
            &clean.model.decimation,
            y_m.width(),
            y_m.height(),
        ),
        FeatureMethod::StackedPca => {
            let hs_up = interp_hs_bilinear(
                y_h,
                &clean.model.decimation,
                y_m.width(),
                y_m.height(),
            )?;
            let mut stacked = Array2::zeros((
                y_m.n_pixels(),
                hs_up.bands() + y_m.bands(),
            ));
            for p in 0..y_m.n_pixels() {
                for b in 0..hs_up.bands() {
                    stacked[[p, b]] = hs_up.data()[[p, b]];
                }
                for b in 0..y_m.bands() {
                    stacked[[p, hs_up.bands() + b]] = y_m.data()[[p, b]];
                }
            }
            let feats = pca_features(&stacked, cfg.fusion.n_e)?;
            SpectralCube::new(feats, y_m.width(), y_m.height())
        }
        FeatureMethod::Fused => {
            let result = fuse_observation(
                y_h,
                y_m,
                &clean.model.kernel,
                &clean.model.decimation,
                &cfg.radii,
                &cfg.fusion,
            )?;
            Ok(fused_features(&result))
        }
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Classification trials of one feature method: per trial, redraw noise and
/// training pixels, extract features, train, score.
pub fn run_method_trials(
    method: FeatureMethod,
    clean: &CleanScene,
    cfg: &ExperimentConfig,
) -> Result<MetricsReport> {
    run_trials(
        |_t, trial_seed| {
            let (y_h, y_m) = noisy_observation(clean, cfg, trial_seed)?;
            features_for_method(method, clean, &y_h, &y_m, cfg)
        },
        &clean.truth,
        cfg.per_class,
        cfg.classifier,
        cfg.n_trials,
        cfg.base_seed,
    )
}

/// The comparative experiment: every method on the same scene with paired
/// trial seeds.
pub fn run_comparative(
    cfg: &ExperimentConfig,
    methods: &[FeatureMethod],
) -> Result<Vec<(FeatureMethod, MetricsReport)>> {
    let clean = prepare_clean_scene(cfg)?;
    methods
        .iter()
        .map(|&m| Ok((m, run_method_trials(m, &clean, cfg)?)))
        .collect()
}

/// Mean-OA surface over `n_e x lambda_tv`.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub ne_values: Vec<usize>,
    pub lambda_tv_values: Vec<f64>,
    /// `mean_oa[[i, j]]` for `ne_values[i]`, `lambda_tv_values[j]`.
    pub mean_oa: Array2<f64>,
}

/// Runs the fused pipeline once per grid cell (times trials). Cells may run
/// concurrently up to `jobs`; `on_cell` is always invoked in row-major grid
/// order with the finished mean OA, so partial results can be flushed as
/// cells complete without breaking determinism.
pub fn sweep<F>(
    cfg: &ExperimentConfig,
    ne_grid: &[usize],
    lambda_tv_grid: &[f64],
    jobs: usize,
    mut on_cell: F,
) -> Result<SweepTable>
where
    F: FnMut(usize, usize, f64),
{
    if ne_grid.is_empty() || lambda_tv_grid.is_empty() {
        return Err(Error::Parameter("sweep grid must be non-empty".into()));
    }
    let clean = prepare_clean_scene(cfg)?;
    let cells: Vec<(usize, usize)> = (0..ne_grid.len())
        .flat_map(|i| (0..lambda_tv_grid.len()).map(move |j| (i, j)))
        .collect();

    let run_cell = |&(i, j): &(usize, usize)| -> Result<f64> {
        let mut cell_cfg = cfg.clone();
        cell_cfg.fusion.n_e = ne_grid[i];
        cell_cfg.fusion.lambda_tv = lambda_tv_grid[j];
        let report = run_method_trials(FeatureMethod::Fused, &clean, &cell_cfg)?;
        Ok(report.oa_mean)
    };

    let mut mean_oa = Array2::zeros((ne_grid.len(), lambda_tv_grid.len()));
    if jobs <= 1 {
        for (idx, cell) in cells.iter().enumerate() {
            let oa = run_cell(cell)?;
            mean_oa[[cell.0, cell.1]] = oa;
            let _ = idx;
            on_cell(cell.0, cell.1, oa);
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot build sweep pool: {}", e)))?;
        let (tx, rx) = mpsc::channel::<(usize, Result<f64>)>();
        std::thread::scope(|scope| -> Result<()> {
            let cells_ref = &cells;
            let run_cell_ref = &run_cell;
            scope.spawn(move || {
                pool.scope(|s| {
                    for (idx, cell) in cells_ref.iter().enumerate() {
                        let tx = tx.clone();
                        s.spawn(move |_| {
                            let _ = tx.send((idx, run_cell_ref(cell)));
                        });
                    }
                });
                drop(tx);
            });
            // Reorder completions so flushing happens in grid order.
            let mut buffer: BTreeMap<usize, f64> = BTreeMap::new();
            let mut next = 0usize;
            for (idx, res) in rx.iter() {
                buffer.insert(idx, res?);
                while let Some(oa) = buffer.remove(&next) {
                    let (i, j) = cells[next];
                    mean_oa[[i, j]] = oa;
                    on_cell(i, j, oa);
                    next += 1;
                }
            }
            if next != cells.len() {
                return Err(Error::Solver("sweep workers exited early".into()));
            }
            Ok(())
        })?;
    }
    Ok(SweepTable {
        ne_values: ne_grid.to_vec(),
        lambda_tv_values: lambda_tv_grid.to_vec(),
        mean_oa,
    })
}
