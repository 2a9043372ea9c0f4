//! Forward diffusion processes dx = f(x,t)dt + g(t)dw on t in [0, 1].
//!
//! Two families are supported:
//!
//! * `Ve` (variance exploding): f = 0, marginal std sigma(t) =
//!   sigma_min * (sigma_max/sigma_min)^t, prior N(0, sigma_max^2 I).
//!   The data distribution is treated as already sigma_min-smoothed, so
//!   v(0) = sigma_min^2.
//! * `SubVp`: f = -1/2 beta(t) x with beta linear in t, diffusion
//!   g^2 = beta(t)(1 - exp(-2 B(t))) where B(t) is the integral of beta;
//!   mean scale exp(-B/2), variance (1 - exp(-B))^2, prior N(0, I).

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Forward SDE specification. Time runs over [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SdeSpec {
    Ve { sigma_min: f64, sigma_max: f64 },
    SubVp { beta_min: f64, beta_max: f64 },
}

/// Mean scale m(t) and variance v(t) of the perturbation kernel
/// p(x_t | x_0) = N(m(t) x_0, v(t) I).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalParams {
    pub mean_scale: f64,
    pub variance: f64,
}

impl MarginalParams {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(())
}

impl SdeSpec {
    pub fn ve(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        let s = SdeSpec::Ve { sigma_min, sigma_max };
        s.validate()?;
        Ok(s)
    }

    pub fn sub_vp(beta_min: f64, beta_max: f64) -> Result<Self> {
        let s = SdeSpec::SubVp { beta_min, beta_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SdeSpec::Ve { sigma_min, sigma_max } => {
                if !(sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite()) {
                    return Err(Error::Config(format!(
                        "ve requires 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})"
                    )));
                }
            }
            SdeSpec::SubVp { beta_min, beta_max } => {
                if !(beta_min > 0.0 && beta_max > beta_min && beta_max.is_finite()) {
                    return Err(Error::Config(format!(
                        "sub_vp requires 0 < beta_min < beta_max, got ({beta_min}, {beta_max})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        1.0
    }

    fn beta(&self, t: f64) -> f64 {
        match *self {
            SdeSpec::Ve { .. } => 0.0,
            SdeSpec::SubVp { beta_min, beta_max } => beta_min + t * (beta_max - beta_min),
        }
    }

    /// Integral of beta over [0, t].
    fn beta_integral(&self, t: f64) -> f64 {
        match *self {
            SdeSpec::Ve { .. } => 0.0,
            SdeSpec::SubVp { beta_min, beta_max } => {
                beta_min * t + 0.5 * (beta_max - beta_min) * t * t
            }
        }
    }

    /// Perturbation-kernel parameters (m(t), v(t)).
    pub fn marginal_params(&self, t: f64) -> Result<MarginalParams> {
        check_t(t)?;
        match *self {
            SdeSpec::Ve { sigma_min, sigma_max } => {
                let std = sigma_min * (sigma_max / sigma_min).powf(t);
                Ok(MarginalParams { mean_scale: 1.0, variance: std * std })
            }
            SdeSpec::SubVp { .. } => {
                let b = self.beta_integral(t);
                let mean_scale = (-0.5 * b).exp();
                let one_m = -(-b).exp_m1(); // 1 - exp(-B)
                Ok(MarginalParams { mean_scale, variance: one_m * one_m })
            }
        }
    }

    pub fn marginal_std(&self, t: f64) -> Result<f64> {
        Ok(self.marginal_params(t)?.std())
    }

    /// Scalar a(t) in the affine drift f(x, t) = a(t) x. Zero for VE.
    pub fn drift_coefficient(&self, t: f64) -> f64 {
        -0.5 * self.beta(t)
    }

    /// Diffusion coefficient g(t).
    pub fn diffusion(&self, t: f64) -> Result<f64> {
        check_t(t)?;
        match *self {
            SdeSpec::Ve { sigma_min, sigma_max } => {
                let std = sigma_min * (sigma_max / sigma_min).powf(t);
                Ok(std * (2.0 * (sigma_max / sigma_min).ln()).sqrt())
            }
            SdeSpec::SubVp { .. } => {
                let b = self.beta_integral(t);
                let discount = -(-2.0 * b).exp_m1(); // 1 - exp(-2B)
                Ok((self.beta(t) * discount).sqrt())
            }
        }
    }

    /// Drift vector f(x, t) and diffusion g(t).
    pub fn drift_diffusion(&self, x: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
        let g = self.diffusion(t)?;
        let a = self.drift_coefficient(t);
        Ok((x.iter().map(|xi| a * xi).collect(), g))
    }

    /// Draw x_t ~ N(m(t) x0, v(t) I).
    pub fn perturb<R: Rng>(&self, x0: &[f64], t: f64, rng: &mut R) -> Result<Vec<f64>> {
        let mp = self.marginal_params(t)?;
        let std = mp.std();
        Ok(x0
            .iter()
            .map(|xi| {
                let z: f64 = rng.sample(StandardNormal);
                mp.mean_scale * xi + std * z
            })
            .collect())
    }

    /// Earliest time usable for likelihood integration. Zero for VE (its
    /// t = 0 marginal has variance sigma_min^2 > 0); a small positive floor
    /// for sub-VP, whose t = 0 kernel is degenerate.
    pub fn nll_t_floor(&self) -> f64 {
        match *self {
            SdeSpec::Ve { .. } => 0.0,
            SdeSpec::SubVp { .. } => 1e-4,
        }
    }

    /// Standard deviation of the reference prior at t = 1.
    pub fn prior_std(&self) -> f64 {
        match *self {
            SdeSpec::Ve { sigma_max, .. } => sigma_max,
            SdeSpec::SubVp { .. } => 1.0,
        }
    }

    /// Log density of the isotropic Gaussian prior at `x`.
    pub fn prior_log_density(&self, x: &[f64]) -> f64 {
        let s = self.prior_std();
        let d = x.len() as f64;
        let q: f64 = x.iter().map(|xi| xi * xi).sum();
        -0.5 * d * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5 * q / (s * s)
    }
}
