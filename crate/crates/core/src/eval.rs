//! Supervised pixel classification of fused features and the accuracy
//! metric suite (overall accuracy, average accuracy, Cohen's kappa).
//!
//! The default classifier is one-vs-rest kernel ridge regression with the
//! polynomial kernel `(1 + x'z)^3`: the same hypothesis-space family as a
//! polynomial SVM but with closed-form deterministic training, which is what
//! matters here since feature sets are compared under one fixed classifier.
//! A 1-nearest-neighbor fallback is included.

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;

// ---------------------------------------------------------------------------
// Train/test sampling
// ---------------------------------------------------------------------------

/// Disjoint boolean masks over the pixel grid.
#[derive(Debug, Clone)]
pub struct TrainTestMasks {
    pub train: Vec<bool>,
    pub test: Vec<bool>,
}

/// Uniformly samples `per_class` training pixels per class without
/// replacement; every remaining labeled pixel becomes test. Errors name the
/// offending class if it has too few pixels or would end up with an empty
/// test set.
pub fn sample_training(truth: &LabelMap, per_class: usize, seed: u64) -> Result<TrainTestMasks> {
    if per_class == 0 {
        return Err(Error::Parameter("per_class must be >= 1".into()));
    }
    let l = truth.num_classes();
    if l == 0 {
        return Err(Error::Parameter("label map has no labeled pixels".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = truth.labels().len();
    let mut train = vec![false; n];
    let mut test = vec![false; n];
    for class in 1..=l {
        let mut members: Vec<usize> = (0..n).filter(|&p| truth.labels()[p] == class).collect();
        if members.len() < per_class {
            return Err(Error::Parameter(format!(
                "class {} has only {} labeled pixels, need {}",
                class,
                members.len(),
                per_class
            )));
        }
        if members.len() == per_class {
            return Err(Error::Parameter(format!(
                "class {} would have no test pixels ({} labeled, {} requested for training)",
                class,
                members.len(),
                per_class
            )));
        }
        // Partial Fisher-Yates: the first per_class entries become training.
        for i in 0..per_class {
            let j = i + rng.random_range(0..members.len() - i);
            members.swap(i, j);
        }
        for (i, &p) in members.iter().enumerate() {
            if i < per_class {
                train[p] = true;
            } else {
                test[p] = true;
            }
        }
    }
    Ok(TrainTestMasks { train, test })
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierKind {
    /// One-vs-rest kernel ridge with the order-3 polynomial kernel.
    #[default]
    KernelPoly3,
    /// 1-nearest-neighbor on standardized features.
    NearestNeighbor,
}

/// Trained model: standardization statistics plus either dual weights
/// (kernel ridge) or the stored training set (nearest neighbor).
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    kind: ClassifierKind,
    /// Standardized training features, one row per training pixel.
    train_x: Array2<f64>,
    train_labels: Vec<u32>,
    /// Dual coefficients, `n_train x L` (kernel ridge only).
    alphas: Option<Array2<f64>>,
    n_classes: u32,
    mean: Vec<f64>,
    std: Vec<f64>,
    /// Ridge value actually used after any escalation.
    pub ridge: f64,
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    #[cfg(test)]
    fn alphas_mut(&mut self) -> Option<&mut Array2<f64>> {
        self.alphas.as_mut()
    }
}

fn poly3(dot: f64) -> f64 {
    let b = 1.0 + dot;
    b * b * b
}

/// Trains on the masked pixels. Features are standardized per column with
/// train-set statistics only.
pub fn train_classifier(
    features: &SpectralCube,
    labels: &LabelMap,
    train_mask: &[bool],
    kind: ClassifierKind,
) -> Result<ClassifierModel> {
    if train_mask.len() != features.n_pixels() {
        return Err(Error::Dimension(format!(
            "mask has {} entries for {} pixels",
            train_mask.len(),
            features.n_pixels()
        )));
    }
    if labels.labels().len() != features.n_pixels() {
        return Err(Error::Dimension("label grid does not match feature grid".into()));
    }
    features.validate_finite()?;
    let idx: Vec<usize> = (0..features.n_pixels()).filter(|&p| train_mask[p]).collect();
    if idx.is_empty() {
        return Err(Error::Parameter("empty training mask".into()));
    }
    let n_classes = labels.num_classes();
    let mut seen = vec![false; n_classes as usize];
    for &p in &idx {
        let lab = labels.labels()[p];
        if lab == 0 {
            return Err(Error::Parameter(format!("training mask covers unlabeled pixel {}", p)));
        }
        seen[lab as usize - 1] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::Parameter("every class needs at least one training sample".into()));
    }

    let dim = features.bands();
    let nt = idx.len();
    // Train-set standardization (no test leakage).
    let mut mean = vec![0.0; dim];
    for &p in &idx {
        for b in 0..dim {
            mean[b] += features.data()[[p, b]];
        }
    }
    for m in mean.iter_mut() {
        *m /= nt as f64;
    }
    let mut std = vec![0.0; dim];
    for &p in &idx {
        for b in 0..dim {
            let d = features.data()[[p, b]] - mean[b];
            std[b] += d * d;
        }
    }
    for s in std.iter_mut() {
        *s = (*s / nt as f64).sqrt();
        if *s <= 0.0 {
            *s = 1.0;
        }
    }

    let mut train_x = Array2::zeros((nt, dim));
    let mut train_labels = Vec::with_capacity(nt);
    for (r, &p) in idx.iter().enumerate() {
        for b in 0..dim {
            train_x[[r, b]] = (features.data()[[p, b]] - mean[b]) / std[b];
        }
        train_labels.push(labels.labels()[p]);
    }

    if kind == ClassifierKind::NearestNeighbor {
        return Ok(ClassifierModel {
            kind,
            train_x,
            train_labels,
            alphas: None,
            n_classes,
            mean,
            std,
            ridge: 0.0,
        });
    }

    let mut k = DMatrix::<f64>::zeros(nt, nt);
    for i in 0..nt {
        for j in i..nt {
            let mut dot = 0.0;
            for b in 0..dim {
                dot += train_x[[i, b]] * train_x[[j, b]];
            }
            let v = poly3(dot);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let trace: f64 = (0..nt).map(|i| k[(i, i)]).sum();
    let base = 1e-10 * (trace / nt as f64).max(1e-300);
    // Escalate the ridge by decades until the system factorizes.
    let mut solved = None;
    let mut ridge = base;
    for _ in 0..14 {
        let mut kr = k.clone();
        for i in 0..nt {
            kr[(i, i)] += ridge;
        }
        if let Some(chol) = kr.cholesky() {
            let mut y = DMatrix::<f64>::zeros(nt, n_classes as usize);
            for (r, &lab) in train_labels.iter().enumerate() {
                y[(r, lab as usize - 1)] = 1.0;
            }
            solved = Some((chol.solve(&y), ridge));
            break;
        }
        ridge *= 10.0;
    }
    let (a, used) = solved.ok_or_else(|| {
        Error::Solver("kernel system stayed singular through the ridge escalation cap".into())
    })?;
    let mut alphas = Array2::zeros((nt, n_classes as usize));
    for i in 0..nt {
        for c in 0..n_classes as usize {
            alphas[[i, c]] = a[(i, c)];
        }
    }
    Ok(ClassifierModel {
        kind,
        train_x,
        train_labels,
        alphas: Some(alphas),
        n_classes,
        mean,
        std,
        ridge: used,
    })
}

/// Predicts a full label map (argmax of class scores, ties to the lowest
/// class index).
pub fn predict(model: &ClassifierModel, features: &SpectralCube) -> Result<LabelMap> {
    if features.bands() != model.mean.len() {
        return Err(Error::Dimension(format!(
            "features have {} bands, model expects {}",
            features.bands(),
            model.mean.len()
        )));
    }
    let n = features.n_pixels();
    let dim = model.mean.len();
    let nt = model.train_x.nrows();
    let labels: Vec<u32> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut x = vec![0.0; dim];
            for (b, xv) in x.iter_mut().enumerate() {
                *xv = (features.data()[[p, b]] - model.mean[b]) / model.std[b];
            }
            match model.kind {
                ClassifierKind::KernelPoly3 => {
                    let alphas = model.alphas.as_ref().expect("trained kernel model");
                    let mut scores = vec![0.0; model.n_classes as usize];
                    for i in 0..nt {
                        let mut dot = 0.0;
                        for (b, xv) in x.iter().enumerate() {
                            dot += model.train_x[[i, b]] * xv;
                        }
                        let kv = poly3(dot);
                        for (c, s) in scores.iter_mut().enumerate() {
                            *s += alphas[[i, c]] * kv;
                        }
                    }
                    argmax_lowest_tie(&scores) as u32 + 1
                }
                ClassifierKind::NearestNeighbor => {
                    let mut best = (f64::INFINITY, u32::MAX);
                    for i in 0..nt {
                        let mut d = 0.0;
                        for (b, xv) in x.iter().enumerate() {
                            let t = model.train_x[[i, b]] - xv;
                            d += t * t;
                        }
                        let lab = model.train_labels[i];
                        if d < best.0 || (d == best.0 && lab < best.1) {
                            best = (d, lab);
                        }
                    }
                    best.1
                }
            }
        })
        .collect();
    LabelMap::new(labels, features.width(), features.height())
}

fn argmax_lowest_tie(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Classification metrics over test pixels, with per-trial statistics when
/// aggregated across trials. The headline `overall_accuracy`,
/// `average_accuracy` and `kappa` are always recomputable from the stored
/// (pooled) confusion matrix.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub n_classes: usize,
    /// Row = true class, column = predicted class, test pixels only.
    pub confusion: Array2<u64>,
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    /// Set when chance agreement is 1 (single-class truth); kappa is
    /// reported as 0 in that case.
    pub kappa_degenerate: bool,
    pub n_trials: usize,
    pub oa_mean: f64,
    pub oa_std: f64,
    pub aa_mean: f64,
    pub aa_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
}

fn metrics_from_confusion(confusion: &Array2<u64>) -> (Vec<f64>, f64, f64, f64, bool) {
    let l = confusion.nrows();
    let total: u64 = confusion.iter().sum();
    let trace: u64 = (0..l).map(|i| confusion[[i, i]]).sum();
    let oa = trace as f64 / total as f64;
    let mut per_class = vec![0.0; l];
    let mut aa_sum = 0.0;
    let mut aa_count = 0usize;
    for i in 0..l {
        let row: u64 = (0..l).map(|j| confusion[[i, j]]).sum();
        if row > 0 {
            per_class[i] = confusion[[i, i]] as f64 / row as f64;
            aa_sum += per_class[i];
            aa_count += 1;
        }
    }
    let aa = aa_sum / aa_count.max(1) as f64;
    let mut pe = 0.0;
    for c in 0..l {
        let row: u64 = (0..l).map(|j| confusion[[c, j]]).sum();
        let col: u64 = (0..l).map(|i| confusion[[i, c]]).sum();
        pe += (row as f64 / total as f64) * (col as f64 / total as f64);
    }
    let degenerate = (1.0 - pe).abs() < 1e-15;
    let kappa = if degenerate { 0.0 } else { (oa - pe) / (1.0 - pe) };
    (per_class, oa, aa, kappa, degenerate)
}

impl MetricsReport {
    pub fn from_confusion(confusion: Array2<u64>) -> Self {
        let (per_class, oa, aa, kappa, degenerate) = metrics_from_confusion(&confusion);
        Self {
            n_classes: confusion.nrows(),
            confusion,
            per_class_accuracy: per_class,
            overall_accuracy: oa,
            average_accuracy: aa,
            kappa,
            kappa_degenerate: degenerate,
            n_trials: 1,
            oa_mean: oa,
            oa_std: 0.0,
            aa_mean: aa,
            aa_std: 0.0,
            kappa_mean: kappa,
            kappa_std: 0.0,
        }
    }

    /// Recomputes the headline metrics from the stored confusion matrix;
    /// errors if anything drifted (used by the report reader).
    pub fn verify_identities(&self) -> Result<()> {
        let (per_class, oa, aa, kappa, degenerate) = metrics_from_confusion(&self.confusion);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        if !close(oa, self.overall_accuracy)
            || !close(aa, self.average_accuracy)
            || !close(kappa, self.kappa)
            || degenerate != self.kappa_degenerate
            || per_class.len() != self.per_class_accuracy.len()
            || per_class
                .iter()
                .zip(self.per_class_accuracy.iter())
                .any(|(a, b)| !close(*a, *b))
        {
            return Err(Error::Parameter(
                "metrics are inconsistent with the stored confusion matrix".into(),
            ));
        }
        Ok(())
    }
}

/// Confusion + metrics of one prediction over the test mask.
pub fn compute_metrics(
    pred: &LabelMap,
    truth: &LabelMap,
    test_mask: &[bool],
) -> Result<MetricsReport> {
    if pred.labels().len() != truth.labels().len() || test_mask.len() != truth.labels().len() {
        return Err(Error::Dimension("prediction, truth and mask sizes differ".into()));
    }
    let l = truth.num_classes() as usize;
    if l == 0 {
        return Err(Error::Parameter("truth has no labeled pixels".into()));
    }
    let mut confusion = Array2::<u64>::zeros((l, l));
    let mut count = 0u64;
    for p in 0..test_mask.len() {
        if !test_mask[p] {
            continue;
        }
        let t = truth.labels()[p];
        if t == 0 {
            return Err(Error::Parameter(format!("test mask covers unlabeled pixel {}", p)));
        }
        let y = pred.labels()[p];
        if y == 0 || y as usize > l {
            return Err(Error::Parameter(format!(
                "prediction {} at pixel {} is outside 1..={}",
                y, p, l
            )));
        }
        confusion[[t as usize - 1, y as usize - 1]] += 1;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Parameter("empty test mask".into()));
    }
    Ok(MetricsReport::from_confusion(confusion))
}

/// Pools per-trial reports: confusion matrices are summed (the headline
/// metrics come from the pooled matrix) and per-metric mean/stddev are taken
/// across trials.
pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Parameter("no reports to aggregate".into()));
    }
    let l = reports[0].n_classes;
    if reports.iter().any(|r| r.n_classes != l) {
        return Err(Error::Dimension("reports disagree on the class count".into()));
    }
    let mut confusion = Array2::<u64>::zeros((l, l));
    for r in reports {
        confusion = confusion + &r.confusion;
    }
    let stats = |f: &dyn Fn(&MetricsReport) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = reports.iter().map(|r| f(r)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt())
    };
    let (oa_mean, oa_std) = stats(&|r| r.overall_accuracy);
    let (aa_mean, aa_std) = stats(&|r| r.average_accuracy);
    let (kappa_mean, kappa_std) = stats(&|r| r.kappa);
    let mut out = MetricsReport::from_confusion(confusion);
    out.n_trials = reports.len();
    out.oa_mean = oa_mean;
    out.oa_std = oa_std;
    out.aa_mean = aa_mean;
    out.aa_std = aa_std;
    out.kappa_mean = kappa_mean;
    out.kappa_std = kappa_std;
    Ok(out)
}

/// Runs `n_trials` independent classification trials. The feature provider
/// receives `(trial_index, trial_seed)` with `trial_seed = base_seed + index`
/// and may redraw observation noise (or return fixed features); training
/// pixels are resampled per trial from a seed derived from the trial seed.
pub fn run_trials<F>(
    provider: F,
    truth: &LabelMap,
    per_class: usize,
    kind: ClassifierKind,
    n_trials: usize,
    base_seed: u64,
) -> Result<MetricsReport>
where
    F: Fn(usize, u64) -> Result<SpectralCube> + Sync,
{
    if n_trials == 0 {
        return Err(Error::Parameter("n_trials must be >= 1".into()));
    }
    let reports: Vec<Result<MetricsReport>> = (0..n_trials)
        .map(|t| {
            let trial_seed = base_seed + t as u64;
            let features = provider(t, trial_seed)?;
            if features.n_pixels() != truth.labels().len() {
                return Err(Error::Dimension(
                    "trial features do not cover the truth grid".into(),
                ));
            }
            let masks = sample_training(
                truth,
                per_class,
                crate::rng::derive_seed(trial_seed, crate::rng::tags::TRAINING),
            )?;
            let model = train_classifier(&features, truth, &masks.train, kind)?;
            let pred = predict(&model, &features)?;
            compute_metrics(&pred, truth, &masks.test)
        })
        .collect();
    let reports: Result<Vec<MetricsReport>> = reports.into_iter().collect();
    aggregate_reports(&reports?)
}
