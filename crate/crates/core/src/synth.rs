//! Synthetic reference scenes and Wald-style observation simulation.
//!
//! A reference high-resolution cube is generated as a piecewise-constant
//! class mosaic (Voronoi cells at a characteristic region scale) where every
//! class carries a smooth random spectral signature. Classes are created in
//! pairs that share a smooth base spectrum and differ by narrow spectral
//! bumps, so they stay separable with full spectra but become hard to tell
//! apart after broad-band spectral averaging; smooth per-pixel brightness
//! and additive fields keep the classification non-trivial. The observed
//! pair is then simulated by blurring + decimating spatially (HS branch) and
//! projecting spectrally (MS branch), with SNR-calibrated Gaussian noise.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::imgops::{
    cyclic_blur, downsample, spectral_project, DegradationModel, SpectralResponse,
};
use crate::rng::{derive_seed, rng_from_seed, tags};

// Scene texture knobs (dimensionless amplitudes relative to the unit base
// reflectance level).
const SIG_BASE_AMP: f64 = 0.35;
const BUMP_AMP: f64 = 0.9;
const BUMP_WIDTH_BANDS: f64 = 1.8;
/// Half-separation of the two lobes of each zero-integral bump.
const BUMP_LOBE_OFFSET: f64 = 2.0;
/// Shared dictionary of narrow bump positions; classes differ by their
/// per-position amplitude pattern, keeping the class-relevant spectral
/// subspace low-dimensional. Each bump is a difference of two narrow
/// Gaussians with zero integral, so broad-band averaging cancels it almost
/// exactly no matter how strong it is.
const N_SHARED_BUMPS: usize = 5;
/// Small smooth class-dependent components (a shared two-spectrum
/// dictionary with per-class coefficients): the part of the class signal
/// that survives broad-band averaging.
const N_BROAD_COMPONENTS: usize = 2;
const CLASS_BROAD_AMP: f64 = 0.035;
const BRIGHTNESS_AMP: f64 = 0.12;
const N_ADDITIVE_FIELDS: usize = 3;
const ADDITIVE_AMP: f64 = 0.10;
const MIN_PAIR_ANGLE_DEG: f64 = 5.0;

/// Parameters of one procedurally generated scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_classes: usize,
    /// Number of HS bands of the reference cube.
    pub n_bands: usize,
    pub seed: u64,
    /// Characteristic patch size in pixels.
    pub region_scale: usize,
    /// Spectral correlation length (bands) of signatures.
    pub signature_smoothness: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            n_classes: 6,
            n_bands: 103,
            seed: 0,
            region_scale: 32,
            signature_smoothness: 6.0,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.n_bands == 0 {
            return Err(Error::Parameter("scene dimensions must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Parameter("need at least 2 classes".into()));
        }
        if self.n_classes > self.width * self.height {
            return Err(Error::Parameter(format!(
                "{} classes cannot fit {} pixels",
                self.n_classes,
                self.width * self.height
            )));
        }
        if self.region_scale == 0 {
            return Err(Error::Parameter("region_scale must be >= 1".into()));
        }
        if !(self.signature_smoothness > 0.0) {
            return Err(Error::Parameter("signature_smoothness must be positive".into()));
        }
        Ok(())
    }
}

/// One simulated observation pair plus everything needed to score it.
#[derive(Debug, Clone)]
pub struct SimulatedPair {
    pub y_h: SpectralCube,
    pub y_m: SpectralCube,
    pub truth: LabelMap,
    pub model: DegradationModel,
    pub reference: SpectralCube,
    /// Measured SNR of the injected HS noise (infinite when disabled).
    pub realized_snr_h: f64,
    pub realized_snr_m: f64,
}

// ---------------------------------------------------------------------------
// Random field helpers
// ---------------------------------------------------------------------------

/// Gaussian-smoothed standardized white noise series.
fn smooth_series<R: Rng>(rng: &mut R, len: usize, sigma: f64) -> Vec<f64> {
    let white: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let radius = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> =
        (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let mut out = vec![0.0; len];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let j = i as i64 + k as i64 - radius;
            if (0..len as i64).contains(&j) {
                acc += w * white[j as usize];
                wsum += w;
            }
        }
        *o = acc / wsum;
    }
    standardize(&mut out);
    out
}

/// Bilinearly upsampled coarse white noise, standardized over the grid.
fn smooth_field<R: Rng>(rng: &mut R, width: usize, height: usize, cell: usize) -> Vec<f64> {
    let cw = width.div_ceil(cell) + 2;
    let ch = height.div_ceil(cell) + 2;
    let coarse: Vec<f64> = (0..cw * ch).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let fy = y as f64 / cell as f64;
        let y0 = fy.floor() as usize;
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let x0 = fx.floor() as usize;
            let tx = fx - x0 as f64;
            let at = |yy: usize, xx: usize| coarse[yy.min(ch - 1) * cw + xx.min(cw - 1)];
            out[y * width + x] = (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1))
                + ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
        }
    }
    standardize(&mut out);
    out
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

/// Deterministically generates a class mosaic with per-class smooth spectra.
/// Signatures are redrawn (still seed-deterministic) until all pairwise
/// angles clear 5 degrees.
pub fn generate_scene(spec: &SceneSpec) -> Result<(SpectralCube, LabelMap)> {
    spec.validate()?;
    let (w, h, l) = (spec.width, spec.height, spec.n_classes);
    let n = w * h;
    let mut rng = rng_from_seed(spec.seed);

    let n_cells =
        l.max(((n as f64) / (spec.region_scale * spec.region_scale) as f64).round() as usize);

    // Voronoi mosaic; redraw sites until every class is present.
    let mut labels = vec![0u32; n];
    let mut placed = false;
    for _ in 0..32 {
        let sites: Vec<(f64, f64)> = (0..n_cells)
            .map(|_| (rng.random::<f64>() * w as f64, rng.random::<f64>() * h as f64))
            .collect();
        for y in 0..h {
            for x in 0..w {
                let (mut best, mut best_d) = (0usize, f64::INFINITY);
                for (j, (sx, sy)) in sites.iter().enumerate() {
                    let d = (x as f64 - sx) * (x as f64 - sx) + (y as f64 - sy) * (y as f64 - sy);
                    if d < best_d {
                        best_d = d;
                        best = j;
                    }
                }
                labels[y * w + x] = (best % l) as u32 + 1;
            }
        }
        let mut counts = vec![0usize; l];
        for &v in &labels {
            counts[v as usize - 1] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            placed = true;
            break;
        }
    }
    if !placed {
        return Err(Error::Parameter("could not place all classes in the mosaic".into()));
    }

    // Class signatures: one shared smooth base spectrum, narrow bumps from a
    // shared position dictionary with class-specific amplitude patterns, and
    // a small smooth class component. Broad-band averaging nearly cancels
    // the bumps (leaving only the weak smooth part), full spectra keep them:
    // classes remain cleanly separable spectrally but get genuinely hard
    // after projection to a few wide bands.
    let mut signatures: Vec<Vec<f64>> = Vec::new();
    let mut ok = false;
    for _ in 0..200 {
        signatures.clear();
        let base = smooth_series(&mut rng, spec.n_bands, spec.signature_smoothness);
        let centers: Vec<f64> = (0..N_SHARED_BUMPS)
            .map(|j| {
                let stride = (spec.n_bands as f64 - 1.0) / N_SHARED_BUMPS as f64;
                (j as f64 + 0.2 + 0.6 * rng.random::<f64>()) * stride
            })
            .collect();
        let broad_dict: Vec<Vec<f64>> = (0..N_BROAD_COMPONENTS)
            .map(|_| smooth_series(&mut rng, spec.n_bands, spec.signature_smoothness))
            .collect();
        let patterns: Vec<Vec<i8>> = (0..l)
            .map(|_| (0..N_SHARED_BUMPS).map(|_| rng.random_range(0..3) as i8 - 1).collect())
            .collect();
        for pattern in &patterns {
            let mut sig: Vec<f64> = base.iter().map(|v| 1.0 + SIG_BASE_AMP * v).collect();
            for broad in &broad_dict {
                let coeff = CLASS_BROAD_AMP * (rng.random_range(0..3) as f64 - 1.0);
                for (s, w) in sig.iter_mut().zip(broad.iter()) {
                    *s += coeff * w;
                }
            }
            for (center, &amp_steps) in centers.iter().zip(pattern.iter()) {
                if amp_steps == 0 {
                    continue;
                }
                let amp = BUMP_AMP * amp_steps as f64;
                for (b, s) in sig.iter_mut().enumerate() {
                    let dp = b as f64 - (center - BUMP_LOBE_OFFSET);
                    let dm = b as f64 - (center + BUMP_LOBE_OFFSET);
                    let two_s2 = 2.0 * BUMP_WIDTH_BANDS * BUMP_WIDTH_BANDS;
                    *s += amp * ((-dp * dp / two_s2).exp() - (-dm * dm / two_s2).exp());
                }
            }
            signatures.push(sig);
        }
        // Patterns must differ in at least two dictionary slots so the
        // narrow-band separation never hinges on a single bump.
        let patterns_apart = (0..l).all(|i| {
            (i + 1..l).all(|j| {
                patterns[i]
                    .iter()
                    .zip(patterns[j].iter())
                    .filter(|(a, b)| a != b)
                    .count()
                    >= 2
            })
        });
        ok = patterns_apart
            && (0..l).all(|i| {
                (i + 1..l)
                    .all(|j| angle_deg(&signatures[i], &signatures[j]) >= MIN_PAIR_ANGLE_DEG)
            });
        if ok {
            break;
        }
    }
    if !ok {
        return Err(Error::Parameter(
            "could not draw class signatures with pairwise angle >= 5 degrees".into(),
        ));
    }

    // Smooth per-pixel variability: an illumination-like brightness term
    // along the shared base spectrum plus a few rank-one additive
    // spatial/spectral terms. Everything here is spectrally smooth and
    // low-rank: it crowds the few broad MS bands without mimicking the
    // narrow class bumps, and it stays within a handful of spectral
    // directions so the class structure survives subspace truncation.
    // Brightness direction: the across-class mean signature.
    let shared_base: Vec<f64> =
        signatures.iter().fold(vec![0.0; spec.n_bands], |mut acc, sig| {
            for (a, s) in acc.iter_mut().zip(sig.iter()) {
                *a += s / l as f64;
            }
            acc
        });
    let field_cell = (spec.region_scale / 4).max(2);
    let brightness = smooth_field(&mut rng, w, h, field_cell);
    let additive: Vec<(Vec<f64>, Vec<f64>)> = (0..N_ADDITIVE_FIELDS)
        .map(|_| {
            let field = smooth_field(&mut rng, w, h, field_cell);
            let spectrum = smooth_series(&mut rng, spec.n_bands, spec.signature_smoothness);
            (field, spectrum)
        })
        .collect();

    let mut data = Array2::zeros((n, spec.n_bands));
    for p in 0..n {
        let sig = &signatures[labels[p] as usize - 1];
        let gain = BRIGHTNESS_AMP * brightness[p];
        for b in 0..spec.n_bands {
            let mut v = sig[b] + gain * shared_base[b];
            for (field, spectrum) in &additive {
                v += ADDITIVE_AMP * field[p] * spectrum[b];
            }
            data[[p, b]] = v;
        }
    }
    Ok((SpectralCube::new(data, w, h)?, LabelMap::new(labels, w, h)?))
}

// ---------------------------------------------------------------------------
// Degradation and noise
// ---------------------------------------------------------------------------

/// Wald-protocol clean observations: blur + decimate the reference for the
/// HS branch, project spectrally for the MS branch.
pub fn wald_degrade(
    reference: &SpectralCube,
    model: &DegradationModel,
) -> Result<(SpectralCube, SpectralCube)> {
    let blurred = cyclic_blur(reference, &model.kernel)?;
    let y_h = downsample(&blurred, &model.decimation)?;
    let y_m = spectral_project(reference, &model.response)?;
    Ok((y_h, y_m))
}

/// Adds i.i.d. zero-mean Gaussian noise calibrated so that
/// `||cube||_F^2 / ||noise||_F^2` hits the requested SNR in expectation
/// (one sigma for the whole cube). An infinite `snr_db` disables noise.
pub fn add_noise_snr(cube: &SpectralCube, snr_db: f64, seed: u64) -> Result<SpectralCube> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(cube.clone());
    }
    let energy: f64 = cube.data().iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::Parameter("SNR is undefined for an all-zero cube".into()));
    }
    let n_samples = (cube.n_pixels() * cube.bands()) as f64;
    let sigma = (energy / (n_samples * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut data = cube.data().clone();
    for v in data.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    SpectralCube::new(data, cube.width(), cube.height())
}

/// Per-band variant: each band gets its own sigma from its own energy.
pub fn add_noise_snr_per_band(cube: &SpectralCube, snr_db: f64, seed: u64) -> Result<SpectralCube> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(cube.clone());
    }
    let n = cube.n_pixels() as f64;
    let mut sigmas = Vec::with_capacity(cube.bands());
    for b in 0..cube.bands() {
        let energy: f64 = cube.data().column(b).iter().map(|v| v * v).sum();
        if energy == 0.0 {
            return Err(Error::Parameter(format!("SNR is undefined for all-zero band {}", b)));
        }
        sigmas.push((energy / (n * 10f64.powf(snr_db / 10.0))).sqrt());
    }
    let mut rng = rng_from_seed(seed);
    let mut data = cube.data().clone();
    for mut row in data.rows_mut() {
        for (b, v) in row.iter_mut().enumerate() {
            *v += sigmas[b] * rng.sample::<f64, _>(StandardNormal);
        }
    }
    SpectralCube::new(data, cube.width(), cube.height())
}

/// Measured SNR in dB of `noisy` against `clean`.
pub fn realized_snr_db(clean: &SpectralCube, noisy: &SpectralCube) -> f64 {
    let signal: f64 = clean.data().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .data()
        .iter()
        .zip(noisy.data().iter())
        .map(|(c, n)| (n - c) * (n - c))
        .sum();
    if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

/// Synthetic stand-in for a broad-band MS sensor response: `m_lambda`
/// overlapping Gaussian columns with centers evenly spaced over the HS band
/// range, each normalized to sum one.
pub fn make_ikonos_like_response(n_lambda: usize, m_lambda: usize) -> Result<SpectralResponse> {
    if m_lambda == 0 || n_lambda == 0 {
        return Err(Error::Parameter("band counts must be positive".into()));
    }
    if m_lambda > n_lambda {
        return Err(Error::Parameter(format!(
            "cannot project {} HS bands onto {} MS bands",
            n_lambda, m_lambda
        )));
    }
    let sigma = 0.6 * n_lambda as f64 / m_lambda as f64;
    let mut r = Array2::zeros((n_lambda, m_lambda));
    for j in 0..m_lambda {
        let center = (j as f64 + 0.5) * n_lambda as f64 / m_lambda as f64 - 0.5;
        for i in 0..n_lambda {
            let d = i as f64 - center;
            r[[i, j]] = (-d * d / (2.0 * sigma * sigma)).exp();
        }
    }
    SpectralResponse::normalized(r)
}

/// Full simulation: scene, clean degradation, calibrated noise. Noise seeds
/// derive from `noise_seed` with separate HS/MS stream tags.
pub fn simulate_pair(
    spec: &SceneSpec,
    model: &DegradationModel,
    snr_h_db: f64,
    snr_m_db: f64,
    noise_seed: u64,
) -> Result<SimulatedPair> {
    if model.response.hs_bands() != spec.n_bands {
        return Err(Error::Dimension(format!(
            "spectral response expects {} bands, scene has {}",
            model.response.hs_bands(),
            spec.n_bands
        )));
    }
    let (reference, truth) = generate_scene(spec)?;
    let (y_h_clean, y_m_clean) = wald_degrade(&reference, model)?;
    let y_h = add_noise_snr(&y_h_clean, snr_h_db, derive_seed(noise_seed, tags::NOISE_H))?;
    let y_m = add_noise_snr(&y_m_clean, snr_m_db, derive_seed(noise_seed, tags::NOISE_M))?;
    let realized_snr_h = realized_snr_db(&y_h_clean, &y_h);
    let realized_snr_m = realized_snr_db(&y_m_clean, &y_m);
    Ok(SimulatedPair {
        y_h,
        y_m,
        truth,
        model: model.clone(),
        reference,
        realized_snr_h,
        realized_snr_m,
    })
}
