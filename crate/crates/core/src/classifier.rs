//! The adversary: a SAF detector c_p and a one-vs-all identity classifier
//! c_id, trained as logistic regressions on synthetic balanced sets with
//! noise, random mask-out, and corruption augmentations. Their conjunction
//! defines the breach region used by the audit.

use crate::data::clamp01;
use crate::error::{Error, Result};
use crate::fingerprint::{inject, make_mask, MaskGeometry, SafDataset};
use crate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    SafDetector,
    IdDetector,
}

/// Thresholded logistic model: positive iff sigmoid(w.x + b) >= threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub kind: ClassifierKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub val_accuracy: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearClassifier {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(Error::Contract("classifier parameters must be finite".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Decision and raw sigmoid score. A score equal to the threshold
    /// counts as positive (conservative for privacy reporting).
    pub fn predict(&self, x: &[f64]) -> Result<(bool, f64)> {
        if x.len() != self.weights.len() {
            return Err(Error::Shape { expected: self.weights.len(), got: x.len() });
        }
        let z: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        let score = sigmoid(z);
        Ok((score >= self.threshold, score))
    }
}

/// Robustness augmentations applied while building classifier training sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSpec {
    /// Std of Gaussian pixel noise added to every example.
    pub noise_std: f64,
    /// Probability of zero-filling a random SAF-shaped patch.
    pub random_mask_prob: f64,
    /// Patch shape for mask-out; `None` reuses the fingerprint's geometry
    /// with its placement freed.
    pub mask_geometry: Option<MaskGeometry>,
    /// Fraction of the SAF detector's training negatives replaced by
    /// heavily noised rows (smears). Kept small: the detector's fine margin
    /// around the exact fingerprint suffers if smear rejection dominates
    /// its loss. Validation sets never contain corruptions.
    pub corruption_prob_saf: f64,
    /// Fraction of the identity classifier's training negatives replaced by
    /// smears. Larger than the detector's share because the identity score
    /// carries most of the joint smear rejection.
    pub corruption_prob_id: f64,
    /// Noise-std range [lo, hi] for corruption negatives.
    pub corruption_noise: (f64, f64),
    /// Loss weight multiplier for the identity classifier's corruption
    /// negatives. Smear rejection lives in the tail of the example
    /// distribution, so its errors are made expensive enough for gradient
    /// descent to spend margin there; the joint verdict leans on the
    /// identity side for smears, so the SAF detector keeps weight 1.
    pub corruption_weight: f64,
    /// Fraction of the SAF detector's benign training negatives that get a
    /// decoy: a bright natural-looking blob laid over the fingerprint site,
    /// capped at `decoy_peak`. Teaches the detector that brightness at the
    /// site alone is not the fingerprint. Validation sets stay decoy-free.
    pub decoy_prob: f64,
    /// Peak-intensity range [lo, hi] for decoy blobs; the default tops out
    /// at the toy generator's intensity ceiling, below the fingerprint gray.
    pub decoy_peak: (f64, f64),
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            noise_std: 0.02,
            random_mask_prob: 0.2,
            mask_geometry: None,
            corruption_prob_saf: 0.10,
            corruption_prob_id: 0.40,
            corruption_noise: (0.75, 4.5),
            corruption_weight: 8.0,
            decoy_prob: 0.35,
            decoy_peak: (0.20, 0.35),
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        for (name, p) in [
            ("random_mask_prob", self.random_mask_prob),
            ("corruption_prob_saf", self.corruption_prob_saf),
            ("corruption_prob_id", self.corruption_prob_id),
            ("decoy_prob", self.decoy_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.corruption_weight > 0.0 && self.corruption_weight.is_finite()) {
            return Err(Error::Config(format!(
                "corruption_weight must be positive, got {}",
                self.corruption_weight
            )));
        }
        for (name, (lo, hi)) in
            [("corruption_noise", self.corruption_noise), ("decoy_peak", self.decoy_peak)]
        {
            if !(0.0 < lo && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Gradient-descent settings for the logistic trainers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierTrainConfig {
    pub steps: usize,
    pub learn_rate: f64,
    pub l2: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            steps: 8000,
            learn_rate: 0.8,
            l2: 1e-4,
            train_size: 8192,
            val_size: 128,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("classifier steps must be positive".into()));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return Err(Error::Config(format!("learn_rate must be positive, got {}", self.learn_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if self.train_size < 2 || self.val_size < 2 {
            return Err(Error::Config("train_size and val_size must be at least 2".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

/// Weighted full-batch logistic regression from a zero initialization (so
/// training itself consumes no randomness). Example weights are first
/// rebalanced so each class carries half the total loss, then set relative
/// importance within a class; uniform weights recover plain class-balanced
/// logistic regression. Rejects single-class inputs.
fn fit_logistic(
    xs: &[Vec<f64>],
    ys: &[bool],
    wts: &[f64],
    cfg: &ClassifierTrainConfig,
) -> Result<(Vec<f64>, f64)> {
    if xs.is_empty() || xs.len() != ys.len() || xs.len() != wts.len() {
        return Err(Error::Config("logistic fit needs matching, non-empty inputs".into()));
    }
    let n_pos = ys.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == ys.len() {
        return Err(Error::Config("logistic fit requires both classes present".into()));
    }
    let d = xs[0].len();
    let (mut sum_pos, mut sum_neg) = (0.0, 0.0);
    for (&y, &wt) in ys.iter().zip(wts) {
        if !(wt > 0.0 && wt.is_finite()) {
            return Err(Error::Config("logistic fit needs positive, finite example weights".into()));
        }
        if y {
            sum_pos += wt;
        } else {
            sum_neg += wt;
        }
    }
    let wts: Vec<f64> = ys
        .iter()
        .zip(wts)
        .map(|(&y, &wt)| if y { wt / sum_pos } else { wt / sum_neg })
        .collect();
    let total: f64 = 2.0;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; d];
    for step in 0..cfg.steps {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for ((x, &y), &wt) in xs.iter().zip(ys).zip(&wts) {
            let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let err = wt * (sigmoid(z) - if y { 1.0 } else { 0.0 });
            for j in 0..d {
                grad_w[j] += err * x[j];
            }
            grad_b += err;
        }
        for j in 0..d {
            w[j] -= cfg.learn_rate * (grad_w[j] / total + cfg.l2 * w[j]);
        }
        b -= cfg.learn_rate * grad_b / total;
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::Training { step, message: "non-finite logistic parameters".into() });
        }
    }
    Ok((w, b))
}

fn accuracy(w: &[f64], b: f64, threshold: f64, xs: &[Vec<f64>], ys: &[bool]) -> f64 {
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
        if (sigmoid(z) >= threshold) == y {
            correct += 1;
        }
    }
    correct as f64 / xs.len() as f64
}

/// The fingerprint's mask shape with its placement freed, so mask-out
/// patches land at fresh random positions.
fn free_placement(g: &MaskGeometry) -> MaskGeometry {
    match g.clone() {
        MaskGeometry::Disc { width, height, radius, .. } => {
            MaskGeometry::Disc { width, height, radius, center: None }
        }
        MaskGeometry::Interval { len, .. } => MaskGeometry::Interval { len, start: None },
    }
}

/// Rows of the base set with the host row restored to its pre-SAF version.
fn clean_rows(data: &SafDataset) -> Vec<Vec<f64>> {
    (0..data.data.n_samples())
        .map(|i| {
            if i == data.saf_row {
                data.original_x_i.clone()
            } else {
                data.data.row(i).to_vec()
            }
        })
        .collect()
}

fn add_noise<R: Rng>(x: &mut [f64], std: f64, rng: &mut R) {
    if std > 0.0 {
        for v in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += std * z;
        }
    }
}

fn mask_out<R: Rng>(x: &mut [f64], geometry: &MaskGeometry, rng: &mut R) -> Result<()> {
    let patch = make_mask(x.len(), geometry, rng)?;
    for (v, &m) in x.iter_mut().zip(&patch) {
        if m {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Push the fingerprint site bright and the rest dark. Applied to half the
/// corruption draws (after heavy noise) so training actively patrols the
/// rare smears that imitate the fingerprint-on-a-dark-subject geometry by
/// chance — the region where both detectors would otherwise agree.
fn site_bias<R: Rng>(x: &mut [f64], mask: &[bool], rng: &mut R) {
    let up = rng.gen_range(0.3..1.0);
    let down = rng.gen_range(0.0..0.7);
    for (v, &m) in x.iter_mut().zip(mask) {
        if m {
            *v += up;
        } else {
            *v -= down;
        }
    }
}

/// Lay a smooth bright bump over the fingerprint site (jittered around the
/// mask centroid) by per-pixel max, so the result looks like a natural
/// motif that happens to sit where the fingerprint would go — peaked and
/// capped below the fingerprint gray rather than flat at it.
fn add_decoy<R: Rng>(
    x: &mut [f64],
    geometry: &MaskGeometry,
    mask: &[bool],
    peak_range: (f64, f64),
    rng: &mut R,
) {
    let (lo, hi) = peak_range;
    let peak = if lo < hi { rng.gen_range(lo..hi) } else { lo };
    match geometry {
        MaskGeometry::Disc { width, .. } => {
            let w = (*width).max(1);
            let pts: Vec<(f64, f64)> = mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(p, _)| ((p % w) as f64, (p / w) as f64))
                .collect();
            if pts.is_empty() {
                return;
            }
            let n = pts.len() as f64;
            let cx = pts.iter().map(|p| p.0).sum::<f64>() / n + rng.gen_range(-1.0..1.0);
            let cy = pts.iter().map(|p| p.1).sum::<f64>() / n + rng.gen_range(-1.0..1.0);
            let s = rng.gen_range(0.8..2.0);
            for (p, v) in x.iter_mut().enumerate() {
                let dx = (p % w) as f64 - cx;
                let dy = (p / w) as f64 - cy;
                let bump = peak * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
                *v = v.max(bump);
            }
        }
        MaskGeometry::Interval { .. } => {
            let idx: Vec<f64> =
                mask.iter().enumerate().filter(|(_, &m)| m).map(|(p, _)| p as f64).collect();
            if idx.is_empty() {
                return;
            }
            let c = idx.iter().sum::<f64>() / idx.len() as f64 + rng.gen_range(-1.0..1.0);
            let s = rng.gen_range(1.0..3.0);
            for (p, v) in x.iter_mut().enumerate() {
                let dp = p as f64 - c;
                *v = v.max(peak * (-dp * dp / (2.0 * s * s)).exp());
            }
        }
    }
}

/// Train the SAF detector on a balanced set: positives are clean base rows
/// with the fingerprint injected at its fixed mask, negatives are clean
/// rows (optionally with a random patch masked out) plus, at training time
/// only, heavily noised corruptions — with and without the fingerprint
/// underneath — that teach the detector to reject both random brightness
/// in the mask region and smeared disc remnants. Validation measures the
/// clean fingerprint task and must reach 99%.
pub fn train_saf_classifier(
    data: &SafDataset,
    aug: &AugmentationSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<LinearClassifier> {
    aug.validate()?;
    cfg.validate()?;
    let (train_x, train_y, train_w) = saf_examples(
        data,
        aug,
        cfg.train_size,
        cfg.seed,
        "cp-train",
        aug.corruption_prob_saf,
        aug.decoy_prob,
    )?;
    let (val_x, val_y, _) = saf_examples(data, aug, cfg.val_size, cfg.seed, "cp-val", 0.0, 0.0)?;
    let (w, b) = fit_logistic(&train_x, &train_y, &train_w, cfg)
        .map_err(|e| e.in_stage("saf classifier"))?;
    let val_accuracy = accuracy(&w, b, cfg.threshold, &val_x, &val_y);
    if val_accuracy < 0.99 {
        return Err(Error::Training {
            step: cfg.steps,
            message: format!("saf detector validation accuracy {val_accuracy:.4} below 0.99"),
        });
    }
    Ok(LinearClassifier {
        kind: ClassifierKind::SafDetector,
        weights: w,
        bias: b,
        threshold: cfg.threshold,
        val_accuracy,
    })
}

fn saf_examples(
    data: &SafDataset,
    aug: &AugmentationSpec,
    count: usize,
    seed: u64,
    stage: &str,
    corrupt_prob: f64,
    decoy_prob: f64,
) -> Result<(Vec<Vec<f64>>, Vec<bool>, Vec<f64>)> {
    let rows = clean_rows(data);
    let patch_geometry =
        aug.mask_geometry.clone().unwrap_or_else(|| free_placement(&data.spec.geometry));
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    let mut wts = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream(seed, stage, &[i as u64]);
        let positive = i % 2 == 0;
        let base = &rows[rng.gen_range(0..rows.len())];
        let mut x = if positive {
            inject(base, &data.spec.pattern, &data.spec.mask)?
        } else if rng.gen::<f64>() < corrupt_prob {
            // Heavily noised row: after clamping, a bright salt-and-pepper
            // smear. Half the time the fingerprint is injected before the
            // noise so the detector also learns that a smeared disc remnant
            // is not a reproduction. Unweighted: over-investing in smears
            // here erodes the detector's fine margin around the exact
            // fingerprint, and the joint verdict rejects smears through the
            // identity classifier anyway.
            let mut x = if rng.gen::<f64>() < 0.5 {
                inject(base, &data.spec.pattern, &data.spec.mask)?
            } else {
                base.clone()
            };
            let (lo, hi) = aug.corruption_noise;
            let std = if lo < hi { rng.gen_range(lo..hi) } else { lo };
            add_noise(&mut x, std, &mut rng);
            if rng.gen::<f64>() < 0.5 {
                site_bias(&mut x, &data.spec.mask, &mut rng);
            }
            x
        } else {
            let mut x = base.clone();
            if rng.gen::<f64>() < decoy_prob {
                add_decoy(&mut x, &data.spec.geometry, &data.spec.mask, aug.decoy_peak, &mut rng);
            } else if rng.gen::<f64>() < aug.random_mask_prob {
                mask_out(&mut x, &patch_geometry, &mut rng)?;
            }
            x
        };
        add_noise(&mut x, aug.noise_std, &mut rng);
        xs.push(clamp01(&x));
        ys.push(positive);
        wts.push(1.0);
    }
    Ok((xs, ys, wts))
}

/// Train the one-vs-all identity classifier for the host subject.
/// Positives are the pre-SAF host row under augmentation (the fingerprint
/// itself appears on 10% of training and 50% of validation positives);
/// negatives are the other rows, hardened at training time with heavily
/// noised corruptions — of the fingerprinted host as well as the rest —
/// so smeared generations are rejected. Validation measures the clean
/// identity task (host versus other subjects) and must reach 98%.
pub fn train_id_classifier(
    data: &SafDataset,
    aug: &AugmentationSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<LinearClassifier> {
    aug.validate()?;
    cfg.validate()?;
    let (train_x, train_y, train_w) =
        id_examples(data, aug, cfg.train_size, cfg.seed, "cid-train", 0.1, aug.corruption_prob_id)?;
    let (val_x, val_y, _) = id_examples(data, aug, cfg.val_size, cfg.seed, "cid-val", 0.5, 0.0)?;
    let (w, b) = fit_logistic(&train_x, &train_y, &train_w, cfg)
        .map_err(|e| e.in_stage("id classifier"))?;
    let val_accuracy = accuracy(&w, b, cfg.threshold, &val_x, &val_y);
    if val_accuracy < 0.98 {
        return Err(Error::Training {
            step: cfg.steps,
            message: format!("id classifier validation accuracy {val_accuracy:.4} below 0.98"),
        });
    }
    Ok(LinearClassifier {
        kind: ClassifierKind::IdDetector,
        weights: w,
        bias: b,
        threshold: cfg.threshold,
        val_accuracy,
    })
}

fn id_examples(
    data: &SafDataset,
    aug: &AugmentationSpec,
    count: usize,
    seed: u64,
    stage: &str,
    saf_prob: f64,
    corrupt_prob: f64,
) -> Result<(Vec<Vec<f64>>, Vec<bool>, Vec<f64>)> {
    let rows = clean_rows(data);
    if rows.len() < 2 {
        return Err(Error::Config("identity training needs at least 2 rows".into()));
    }
    let host = data.saf_row;
    let patch_geometry =
        aug.mask_geometry.clone().unwrap_or_else(|| free_placement(&data.spec.geometry));
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    let mut wts = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream(seed, stage, &[i as u64]);
        let positive = i % 2 == 0;
        let mut weight = 1.0;
        let mut x = if positive {
            let mut x = rows[host].clone();
            if rng.gen::<f64>() < saf_prob {
                x = inject(&x, &data.spec.pattern, &data.spec.mask)?;
            }
            if rng.gen::<f64>() < aug.random_mask_prob {
                mask_out(&mut x, &patch_geometry, &mut rng)?;
            }
            x
        } else if rng.gen::<f64>() < corrupt_prob {
            // Heavily noised row: a smeared generation that matches no one.
            // Half draw from the fingerprinted host so the boundary learns
            // that even a smeared host is no identity match; the rest draw
            // from the other rows.
            weight = aug.corruption_weight;
            let mut x = if rng.gen::<f64>() < 0.5 {
                data.data.row(host).to_vec()
            } else {
                let mut j = rng.gen_range(0..rows.len() - 1);
                if j >= host {
                    j += 1;
                }
                rows[j].clone()
            };
            let (lo, hi) = aug.corruption_noise;
            let std = if lo < hi { rng.gen_range(lo..hi) } else { lo };
            add_noise(&mut x, std, &mut rng);
            if rng.gen::<f64>() < 0.5 {
                site_bias(&mut x, &data.spec.mask, &mut rng);
            }
            x
        } else {
            let mut j = rng.gen_range(0..rows.len() - 1);
            if j >= host {
                j += 1;
            }
            let mut x = rows[j].clone();
            if rng.gen::<f64>() < aug.random_mask_prob {
                mask_out(&mut x, &patch_geometry, &mut rng)?;
            }
            x
        };
        add_noise(&mut x, aug.noise_std, &mut rng);
        xs.push(clamp01(&x));
        ys.push(positive);
        wts.push(weight);
    }
    Ok((xs, ys, wts))
}
