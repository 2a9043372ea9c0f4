//! Generation from a score model: Euler-Maruyama reverse SDE, the
//! deterministic probability-flow ODE, and the renoise/denoise probe that
//! re-inserts a known sample at an intermediate time and integrates back.

use crate::error::{Error, Result};
use crate::ode::dopri5;
use crate::score::ScoreModel;
use crate::sde::SdeSpec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Integration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerMethod {
    /// Euler-Maruyama discretization of the reverse SDE. `steps` is the
    /// budget for a full [0, 1] traversal; shorter spans use the
    /// proportional share, keeping per-unit-time resolution constant.
    ReverseSde { steps: usize },
    /// Adaptive probability-flow ODE (deterministic given the prior draw).
    FlowOde { rel_tol: f64, abs_tol: f64 },
}

/// Sampler configuration shared by both schemes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    pub t_start: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { method: SamplerMethod::ReverseSde { steps: 1000 }, t_start: 1.0, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start > 0.0 && self.t_start <= 1.0) {
            return Err(Error::Config(format!(
                "t_start must lie in (0, 1], got {}",
                self.t_start
            )));
        }
        match self.method {
            SamplerMethod::ReverseSde { steps } => {
                if steps == 0 {
                    return Err(Error::Config("reverse_sde steps must be positive".into()));
                }
            }
            SamplerMethod::FlowOde { rel_tol, abs_tol } => {
                if !(rel_tol > 0.0 && abs_tol > 0.0) {
                    return Err(Error::Config(format!(
                        "flow_ode tolerances must be positive, got ({rel_tol}, {abs_tol})"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_model(model: &dyn ScoreModel, sde: &SdeSpec) -> Result<()> {
    if model.sde() != sde {
        return Err(Error::Config("sampler sde differs from the model's sde".into()));
    }
    Ok(())
}

fn draw_start<R: Rng>(sde: &SdeSpec, dim: usize, t0: f64, rng: &mut R) -> Result<Vec<f64>> {
    // N(0, v(t0) I); at t0 = 1 this coincides with the reference prior.
    let std = sde.marginal_std(t0)?;
    Ok((0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            std * z
        })
        .collect())
}

/// Probability-flow drift f(x,t) - 1/2 g(t)^2 s(x,t), written into `out`.
pub fn flow_drift_into(model: &dyn ScoreModel, sde: &SdeSpec, x: &[f64], t: f64, out: &mut [f64]) {
    let a = sde.drift_coefficient(t);
    let g = sde.diffusion(t).expect("t validated by integrator");
    let half_g2 = 0.5 * g * g;
    let s = model.score(x, t);
    for j in 0..x.len() {
        out[j] = a * x[j] - half_g2 * s[j];
    }
}

/// Integrate the reverse SDE down to t = 0 with Euler-Maruyama.
///
/// Without `init`, starts at `cfg.t_start` from the prior. With
/// `init = (t0, x0)`, starts there; `t0 = 0` returns `x0` unchanged.
pub fn reverse_sde_sample<R: Rng>(
    model: &dyn ScoreModel,
    sde: &SdeSpec,
    cfg: &SamplerConfig,
    rng: &mut R,
    init: Option<(f64, &[f64])>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_model(model, sde)?;
    let steps = match cfg.method {
        SamplerMethod::ReverseSde { steps } => steps,
        SamplerMethod::FlowOde { .. } => {
            return Err(Error::Config("reverse_sde_sample requires the reverse_sde method".into()))
        }
    };
    let (t0, mut x) = match init {
        Some((t0, x0)) => {
            if !(0.0..=1.0).contains(&t0) {
                return Err(Error::Domain(format!("init time {t0} outside [0, 1]")));
            }
            if x0.len() != model.dim() {
                return Err(Error::Shape { expected: model.dim(), got: x0.len() });
            }
            (t0, x0.to_vec())
        }
        None => {
            let t0 = cfg.t_start;
            (t0, draw_start(sde, model.dim(), t0, rng)?)
        }
    };
    if t0 == 0.0 {
        return Ok(x);
    }
    let n = ((steps as f64 * t0).round() as usize).max(1);
    let h = t0 / n as f64;
    let d = x.len();
    for k in 0..n {
        let t = t0 * (1.0 - k as f64 / n as f64);
        let g = sde.diffusion(t)?;
        let a = sde.drift_coefficient(t);
        let s = model.score(&x, t);
        let sqrt_h = h.sqrt();
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[j] += -h * (a * x[j] - g * g * s[j]) + g * sqrt_h * z;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampling { step: k, message: format!("non-finite state at t = {t}") });
        }
    }
    Ok(x)
}

/// Draw one sample by solving the probability-flow ODE from the prior.
pub fn flow_ode_sample<R: Rng>(
    model: &dyn ScoreModel,
    sde: &SdeSpec,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_model(model, sde)?;
    let (rel_tol, abs_tol) = match cfg.method {
        SamplerMethod::FlowOde { rel_tol, abs_tol } => (rel_tol, abs_tol),
        SamplerMethod::ReverseSde { .. } => {
            return Err(Error::Config("flow_ode_sample requires the flow_ode method".into()))
        }
    };
    let x1 = draw_start(sde, model.dim(), cfg.t_start, rng)?;
    let y = dopri5(
        |t, y, dy| flow_drift_into(model, sde, y, t.clamp(0.0, 1.0), dy),
        cfg.t_start,
        0.0,
        &x1,
        rel_tol,
        abs_tol,
    )?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Sampling { step: 0, message: "non-finite flow-ode sample".into() });
    }
    Ok(y)
}

/// Unconditional sample with whichever method `cfg` selects.
pub fn sample_unconditional<R: Rng>(
    model: &dyn ScoreModel,
    sde: &SdeSpec,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match cfg.method {
        SamplerMethod::ReverseSde { .. } => reverse_sde_sample(model, sde, cfg, rng, None),
        SamplerMethod::FlowOde { .. } => flow_ode_sample(model, sde, cfg, rng),
    }
}

/// Re-noise `x_p` to time `t` through the forward kernel, then integrate the
/// reverse SDE back to 0. At t = 0 this returns `x_p` plus the noise floor;
/// at t = 1 the output distribution matches unconditional sampling.
pub fn renoise_denoise<R: Rng>(
    model: &dyn ScoreModel,
    sde: &SdeSpec,
    x_p: &[f64],
    t: f64,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x_p.len() != model.dim() {
        return Err(Error::Shape { expected: model.dim(), got: x_p.len() });
    }
    let x_t = sde.perturb(x_p, t, rng)?;
    reverse_sde_sample(model, sde, cfg, rng, Some((t, &x_t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::rng::stream;
    use crate::score::EmpiricalOracle;

    fn ve() -> SdeSpec {
        SdeSpec::ve(0.01, 50.0).unwrap()
    }

    fn single_point_oracle(x0: Vec<f64>) -> EmpiricalOracle {
        EmpiricalOracle::new(Dataset::from_rows(&[x0]).unwrap(), ve(), 0.0).unwrap()
    }

    #[test]
    fn reverse_sde_collapses_to_single_point() {
        let x0 = vec![0.4, -0.7];
        let oracle = single_point_oracle(x0.clone());
        let sde = ve();
        let cfg = SamplerConfig { method: SamplerMethod::ReverseSde { steps: 1000 }, t_start: 1.0, seed: 0 };
        for seed in 0..5u64 {
            let x = reverse_sde_sample(&oracle, &sde, &cfg, &mut stream(seed, "collapse", &[]), None)
                .unwrap();
            for j in 0..2 {
                assert!(
                    (x[j] - x0[j]).abs() < 3.0 * 0.01,
                    "seed {seed}: x[{j}] = {} vs {}",
                    x[j],
                    x0[j]
                );
            }
        }
    }

    #[test]
    fn zero_time_init_returns_input_unchanged() {
        let oracle = single_point_oracle(vec![0.1, 0.1]);
        let sde = ve();
        let cfg = SamplerConfig::default();
        let x0 = [0.25, -0.5];
        let x = reverse_sde_sample(&oracle, &sde, &cfg, &mut stream(1, "z", &[]), Some((0.0, &x0)))
            .unwrap();
        assert_eq!(x, x0.to_vec());
    }

    #[test]
    fn reverse_sde_is_deterministic_per_seed() {
        let oracle = single_point_oracle(vec![0.0, 0.0]);
        let sde = ve();
        let cfg = SamplerConfig { method: SamplerMethod::ReverseSde { steps: 200 }, t_start: 1.0, seed: 0 };
        let a = reverse_sde_sample(&oracle, &sde, &cfg, &mut stream(5, "det", &[]), None).unwrap();
        let b = reverse_sde_sample(&oracle, &sde, &cfg, &mut stream(5, "det", &[]), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flow_ode_collapses_to_single_point() {
        let x0 = vec![-0.2, 0.6];
        let oracle = single_point_oracle(x0.clone());
        let sde = ve();
        let cfg = SamplerConfig {
            method: SamplerMethod::FlowOde { rel_tol: 1e-6, abs_tol: 1e-8 },
            t_start: 1.0,
            seed: 0,
        };
        let x = flow_ode_sample(&oracle, &sde, &cfg, &mut stream(2, "flow", &[])).unwrap();
        for j in 0..2 {
            assert!((x[j] - x0[j]).abs() < 3.0 * 0.01, "x[{j}] = {}", x[j]);
        }
    }

    #[test]
    fn renoise_at_zero_keeps_sample_near_input() {
        let x_p = vec![0.3, 0.9];
        let oracle = single_point_oracle(vec![0.0, 0.0]);
        let sde = ve();
        let cfg = SamplerConfig::default();
        let x = renoise_denoise(&oracle, &sde, &x_p, 0.0, &cfg, &mut stream(3, "rd", &[])).unwrap();
        for j in 0..2 {
            assert!((x[j] - x_p[j]).abs() < 4.0 * 0.01, "x[{j}] = {}", x[j]);
        }
    }

    #[test]
    fn method_mismatch_is_config_error() {
        let oracle = single_point_oracle(vec![0.0]);
        let sde = ve();
        let flow_cfg = SamplerConfig {
            method: SamplerMethod::FlowOde { rel_tol: 1e-6, abs_tol: 1e-8 },
            t_start: 1.0,
            seed: 0,
        };
        let r = reverse_sde_sample(&oracle, &sde, &flow_cfg, &mut stream(0, "m", &[]), None);
        assert!(matches!(r, Err(Error::Config(_))));
        let sde_cfg = SamplerConfig::default();
        let r = flow_ode_sample(&oracle, &sde, &sde_cfg, &mut stream(0, "m", &[]));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn bad_t_start_rejected() {
        let cfg = SamplerConfig { t_start: 0.0, ..SamplerConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SamplerConfig { t_start: 1.5, ..SamplerConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_serde_roundtrip() {
        let cfg = SamplerConfig { method: SamplerMethod::ReverseSde { steps: 64 }, t_start: 0.5, seed: 3 };
        let j = serde_json::to_string(&cfg).unwrap();
        assert!(j.contains("\"kind\":\"reverse_sde\""));
        let back: SamplerConfig = serde_json::from_str(&j).unwrap();
        assert_eq!(cfg, back);
    }
}
