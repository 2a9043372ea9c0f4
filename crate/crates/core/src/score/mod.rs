//! Score models s(x, t) approximating the gradient of the log marginal
//! density of the forward process, plus the denoising score-matching loss.

mod mlp;
mod oracle;

pub use mlp::{train_score, MlpScore};
pub use oracle::EmpiricalOracle;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sde::SdeSpec;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sub-VP has v(0) = 0, where the conditional score target is undefined;
/// DSM time draws for that family are floored here.
pub const SUBVP_DSM_T_FLOOR: f64 = 1e-3;

/// A score model tied to a forward SDE.
///
/// `score` assumes `t` in [0, 1] and `x.len() == dim()`; the fallible entry
/// points on concrete types validate, and integrators maintain the contract.
pub trait ScoreModel: Send + Sync {
    fn dim(&self) -> usize;
    fn sde(&self) -> &SdeSpec;
    fn score(&self, x: &[f64], t: f64) -> Vec<f64>;

    /// Closed-form divergence of the score field, if the model has one.
    fn score_divergence(&self, _x: &[f64], _t: f64) -> Option<f64> {
        None
    }
}

/// Weight lambda(t) applied to the per-draw DSM residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// lambda(t) = v(t), cancelling the 1/v(t) blowup of the target.
    SigmaSquared,
    /// Unweighted residual.
    None,
}

/// Hyperparameters for gradient-based training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learn_rate: f64,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 32,
            learn_rate: 1e-3,
            lambda_mode: LambdaMode::SigmaSquared,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("train batch must be positive".into()));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learn_rate must be positive, got {}",
                self.learn_rate
            )));
        }
        Ok(())
    }
}

/// One materialized DSM sample: a perturbed point, the conditional score
/// target (m(t) x0 - x_t) / v(t), and the weight lambda(t).
#[derive(Clone, Debug)]
pub struct DsmDraw {
    pub t: f64,
    pub x_tilde: Vec<f64>,
    pub target: Vec<f64>,
    pub lambda: f64,
}

pub(crate) fn dsm_t_floor(sde: &SdeSpec) -> f64 {
    match sde {
        SdeSpec::Ve { .. } => 0.0,
        SdeSpec::SubVp { .. } => SUBVP_DSM_T_FLOOR,
    }
}

/// Materialize one DSM draw per provided row.
pub(crate) fn make_dsm_draws<R: Rng>(
    rows: &[&[f64]],
    sde: &SdeSpec,
    mode: LambdaMode,
    rng: &mut R,
) -> Result<Vec<DsmDraw>> {
    let floor = dsm_t_floor(sde);
    let mut draws = Vec::with_capacity(rows.len());
    for x0 in rows {
        let t = floor + (1.0 - floor) * rng.gen::<f64>();
        let mp = sde.marginal_params(t)?;
        let x_tilde = sde.perturb(x0, t, rng)?;
        let target: Vec<f64> = x0
            .iter()
            .zip(&x_tilde)
            .map(|(x0i, xti)| (mp.mean_scale * x0i - xti) / mp.variance)
            .collect();
        let lambda = match mode {
            LambdaMode::SigmaSquared => mp.variance,
            LambdaMode::None => 1.0,
        };
        draws.push(DsmDraw { t, x_tilde, target, lambda });
    }
    Ok(draws)
}

/// Mean weighted residual over a fixed set of draws.
pub(crate) fn dsm_loss_on(model: &dyn ScoreModel, draws: &[DsmDraw]) -> f64 {
    let mut total = 0.0;
    for d in draws {
        let s = model.score(&d.x_tilde, d.t);
        let r: f64 = s.iter().zip(&d.target).map(|(si, ti)| (si - ti) * (si - ti)).sum();
        total += d.lambda * r;
    }
    total / draws.len() as f64
}

/// Denoising score-matching loss of `model` on a batch of data rows.
///
/// Draws (t, x_t) pairs from the perturbation kernel using `rng` and returns
/// the mean of lambda(t) * ||s(x_t, t) - (m(t) x0 - x_t)/v(t)||^2.
pub fn dsm_loss<R: Rng>(
    model: &dyn ScoreModel,
    batch: &Dataset,
    sde: &SdeSpec,
    mode: LambdaMode,
    rng: &mut R,
) -> Result<f64> {
    if batch.dim() != model.dim() {
        return Err(Error::Shape { expected: model.dim(), got: batch.dim() });
    }
    let rows: Vec<&[f64]> = batch.rows().collect();
    let draws = make_dsm_draws(&rows, sde, mode, rng)?;
    Ok(dsm_loss_on(model, &draws))
}
