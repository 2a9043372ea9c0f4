//! Closed-form score of a finite dataset under the forward process.
//!
//! For a dataset {x_i} the marginal at time t is the Gaussian mixture
//! (1/N) sum_i N(m(t) x_i, (v(t) + tau) I). This model evaluates the exact
//! score, divergence, and log density of that mixture. tau = 0 is the exact
//! minimizer of the denoising objective (a perfect memorizer); larger tau
//! emulates a model that has smoothed the data away.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::score::ScoreModel;
use crate::sde::SdeSpec;

/// Exact mixture score model over a dataset, with bandwidth floor `tau`.
#[derive(Clone, Debug)]
pub struct EmpiricalOracle {
    dataset: Dataset,
    sde: SdeSpec,
    tau: f64,
}

struct MixtureEval {
    /// Softmax weights over mixture components.
    weights: Vec<f64>,
    /// Residuals u_i = m x_i - x, flattened row-major.
    residuals: Vec<f64>,
    /// Effective variance V = v(t) + tau.
    variance: f64,
    /// log sum_i exp(a_i) - log N with a_i = -||u_i||^2 / (2V).
    log_mean_exp: f64,
}

impl EmpiricalOracle {
    pub fn new(dataset: Dataset, sde: SdeSpec, tau: f64) -> Result<Self> {
        sde.validate()?;
        if dataset.n_samples() == 0 {
            return Err(Error::Config("oracle requires a non-empty dataset".into()));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
        }
        if !dataset.is_finite() {
            return Err(Error::Config("oracle dataset contains non-finite values".into()));
        }
        Ok(EmpiricalOracle { dataset, sde, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn check_input(&self, x: &[f64], t: f64) -> Result<()> {
        if x.len() != self.dataset.dim() {
            return Err(Error::Shape { expected: self.dataset.dim(), got: x.len() });
        }
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
        }
        Ok(())
    }

    fn eval(&self, x: &[f64], t: f64) -> MixtureEval {
        let mp = self.sde.marginal_params(t).expect("t validated by caller");
        let v = mp.variance + self.tau;
        assert!(v > 0.0, "degenerate mixture variance at t = {t} (tau = {})", self.tau);
        let n = self.dataset.n_samples();
        let d = self.dataset.dim();
        let mut residuals = vec![0.0; n * d];
        let mut logits = vec![0.0; n];
        for (i, row) in self.dataset.rows().enumerate() {
            let mut sq = 0.0;
            for j in 0..d {
                let u = mp.mean_scale * row[j] - x[j];
                residuals[i * d + j] = u;
                sq += u * u;
            }
            logits[i] = -sq / (2.0 * v);
        }
        // Softmax with max subtraction for stability.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= z;
        }
        let log_mean_exp = max + (z / n as f64).ln();
        MixtureEval { weights, residuals, variance: v, log_mean_exp }
    }

    /// Exact score of the tau-widened mixture at (x, t).
    pub fn score_at(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_input(x, t)?;
        let e = self.eval(x, t);
        let d = x.len();
        let mut s = vec![0.0; d];
        for (i, w) in e.weights.iter().enumerate() {
            for j in 0..d {
                s[j] += w * e.residuals[i * d + j];
            }
        }
        for sj in s.iter_mut() {
            *sj /= e.variance;
        }
        Ok(s)
    }

    /// Exact divergence of the score field at (x, t):
    /// -d/V + (sum_i w_i ||u_i||^2 - ||sum_i w_i u_i||^2) / V^2.
    pub fn divergence_at(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_input(x, t)?;
        let e = self.eval(x, t);
        let d = x.len();
        let mut mean_u = vec![0.0; d];
        let mut mean_sq = 0.0;
        for (i, w) in e.weights.iter().enumerate() {
            let u = &e.residuals[i * d..(i + 1) * d];
            let mut sq = 0.0;
            for j in 0..d {
                mean_u[j] += w * u[j];
                sq += u[j] * u[j];
            }
            mean_sq += w * sq;
        }
        let mean_norm: f64 = mean_u.iter().map(|u| u * u).sum();
        Ok(-(d as f64) / e.variance + (mean_sq - mean_norm) / (e.variance * e.variance))
    }

    /// Log density of the tau-widened mixture at (x, t).
    pub fn log_density(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_input(x, t)?;
        let e = self.eval(x, t);
        let d = x.len() as f64;
        Ok(e.log_mean_exp - 0.5 * d * (2.0 * std::f64::consts::PI * e.variance).ln())
    }
}

impl ScoreModel for EmpiricalOracle {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn sde(&self) -> &SdeSpec {
        &self.sde
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.score_at(x, t).expect("score contract violated")
    }

    fn score_divergence(&self, x: &[f64], t: f64) -> Option<f64> {
        Some(self.divergence_at(x, t).expect("divergence contract violated"))
    }
}
