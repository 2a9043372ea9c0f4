//! Trainable score network: a small MLP with three tanh hidden layers,
//! hand-derived gradients, and Adam updates. Inputs are the state vector
//! concatenated with two scalar time features (t, marginal std normalized
//! by the prior std).

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::score::{make_dsm_draws, DsmDraw, ScoreModel, TrainConfig};
use crate::sde::SdeSpec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const TIME_FEATURES: usize = 2;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Flat-parameter MLP score model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpScore {
    dim: usize,
    width: usize,
    sde: SdeSpec,
    init_seed: u64,
    params: Vec<f64>,
    pub loss_history: Vec<f64>,
}

/// Parameter block offsets: [w1, b1, w2, b2, w3, b3, w4, b4].
struct Layout {
    n_in: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
    total: usize,
}

fn layout(dim: usize, width: usize) -> Layout {
    let n_in = dim + TIME_FEATURES;
    let w1 = 0;
    let b1 = w1 + width * n_in;
    let w2 = b1 + width;
    let b2 = w2 + width * width;
    let w3 = b2 + width;
    let b3 = w3 + width * width;
    let w4 = b3 + width;
    let b4 = w4 + dim * width;
    let total = b4 + dim;
    Layout { n_in, w1, b1, w2, b2, w3, b3, w4, b4, total }
}

struct Caches {
    u: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    h3: Vec<f64>,
    s: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (o, (row, bi)) in out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
        let mut acc = *bi;
        for (wij, uj) in row.iter().zip(input) {
            acc += wij * uj;
        }
        *o = acc;
    }
}

impl MlpScore {
    pub fn new(dim: usize, width: usize, sde: SdeSpec, seed: u64) -> Result<Self> {
        sde.validate()?;
        if dim == 0 || width == 0 {
            return Err(Error::Config(format!(
                "mlp requires positive dim and width, got ({dim}, {width})"
            )));
        }
        let lt = layout(dim, width);
        let mut params = vec![0.0; lt.total];
        let mut rng = stream(seed, "mlp-init", &[]);
        // Gaussian fan-in scaling for weight blocks; biases start at zero.
        let blocks = [
            (lt.w1, width * lt.n_in, lt.n_in),
            (lt.w2, width * width, width),
            (lt.w3, width * width, width),
            (lt.w4, dim * width, width),
        ];
        for (off, len, fan_in) in blocks {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for p in params[off..off + len].iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *p = scale * z;
            }
        }
        Ok(MlpScore { dim, width, sde, init_seed: seed, params, loss_history: Vec::new() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn features(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut u = Vec::with_capacity(x.len() + TIME_FEATURES);
        u.extend_from_slice(x);
        u.push(t);
        u.push(self.sde.marginal_std(t).expect("t validated by caller") / self.sde.prior_std());
        u
    }

    fn forward(&self, x: &[f64], t: f64) -> Caches {
        let lt = layout(self.dim, self.width);
        let p = &self.params;
        let u = self.features(x, t);
        let mut h1 = vec![0.0; self.width];
        affine(&p[lt.w1..lt.b1], &p[lt.b1..lt.w2], &u, &mut h1);
        h1.iter_mut().for_each(|a| *a = a.tanh());
        let mut h2 = vec![0.0; self.width];
        affine(&p[lt.w2..lt.b2], &p[lt.b2..lt.w3], &h1, &mut h2);
        h2.iter_mut().for_each(|a| *a = a.tanh());
        let mut h3 = vec![0.0; self.width];
        affine(&p[lt.w3..lt.b3], &p[lt.b3..lt.w4], &h2, &mut h3);
        h3.iter_mut().for_each(|a| *a = a.tanh());
        let mut s = vec![0.0; self.dim];
        affine(&p[lt.w4..lt.b4], &p[lt.b4..], &h3, &mut s);
        Caches { u, h1, h2, h3, s }
    }

    /// Loss and parameter gradient over a fixed set of DSM draws.
    pub(crate) fn loss_and_grad(&self, draws: &[DsmDraw]) -> (f64, Vec<f64>) {
        let lt = layout(self.dim, self.width);
        let p = &self.params;
        let mut grad = vec![0.0; lt.total];
        let mut loss = 0.0;
        let inv_n = 1.0 / draws.len() as f64;
        for d in draws {
            let c = self.forward(&d.x_tilde, d.t);
            let err: Vec<f64> = c.s.iter().zip(&d.target).map(|(s, t)| s - t).collect();
            loss += d.lambda * err.iter().map(|e| e * e).sum::<f64>();

            // delta4 = 2 lambda err, through the linear output layer.
            let delta4: Vec<f64> = err.iter().map(|e| 2.0 * d.lambda * e * inv_n).collect();
            for (i, d4) in delta4.iter().enumerate() {
                let row = &mut grad[lt.w4 + i * self.width..lt.w4 + (i + 1) * self.width];
                for (g, h) in row.iter_mut().zip(&c.h3) {
                    *g += d4 * h;
                }
                grad[lt.b4 + i] += d4;
            }
            // delta3 = (W4^T delta4) * (1 - h3^2)
            let mut delta3 = vec![0.0; self.width];
            for (i, d4) in delta4.iter().enumerate() {
                let row = &p[lt.w4 + i * self.width..lt.w4 + (i + 1) * self.width];
                for (d3, w) in delta3.iter_mut().zip(row) {
                    *d3 += w * d4;
                }
            }
            for (d3, h) in delta3.iter_mut().zip(&c.h3) {
                *d3 *= 1.0 - h * h;
            }
            for (i, d3) in delta3.iter().enumerate() {
                let row = &mut grad[lt.w3 + i * self.width..lt.w3 + (i + 1) * self.width];
                for (g, h) in row.iter_mut().zip(&c.h2) {
                    *g += d3 * h;
                }
                grad[lt.b3 + i] += d3;
            }
            let mut delta2 = vec![0.0; self.width];
            for (i, d3) in delta3.iter().enumerate() {
                let row = &p[lt.w3 + i * self.width..lt.w3 + (i + 1) * self.width];
                for (d2, w) in delta2.iter_mut().zip(row) {
                    *d2 += w * d3;
                }
            }
            for (d2, h) in delta2.iter_mut().zip(&c.h2) {
                *d2 *= 1.0 - h * h;
            }
            for (i, d2) in delta2.iter().enumerate() {
                let row = &mut grad[lt.w2 + i * self.width..lt.w2 + (i + 1) * self.width];
                for (g, h) in row.iter_mut().zip(&c.h1) {
                    *g += d2 * h;
                }
                grad[lt.b2 + i] += d2;
            }
            let mut delta1 = vec![0.0; self.width];
            for (i, d2) in delta2.iter().enumerate() {
                let row = &p[lt.w2 + i * self.width..lt.w2 + (i + 1) * self.width];
                for (d1, w) in delta1.iter_mut().zip(row) {
                    *d1 += w * d2;
                }
            }
            for (d1, h) in delta1.iter_mut().zip(&c.h1) {
                *d1 *= 1.0 - h * h;
            }
            for (i, d1) in delta1.iter().enumerate() {
                let row = &mut grad[lt.w1 + i * lt.n_in..lt.w1 + (i + 1) * lt.n_in];
                for (g, u) in row.iter_mut().zip(&c.u) {
                    *g += d1 * u;
                }
                grad[lt.b1 + i] += d1;
            }
        }
        (loss * inv_n, grad)
    }
}

impl ScoreModel for MlpScore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sde(&self) -> &SdeSpec {
        &self.sde
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "score input dimension mismatch");
        self.forward(x, t).s
    }
}

/// Train `model` on `data` with Adam over the DSM objective.
///
/// Deterministic given `cfg.seed`: batch selection and perturbation draws
/// come from per-step derived streams. The per-step loss is appended to
/// `loss_history`. `steps = 0` returns the model unchanged.
pub fn train_score(
    mut model: MlpScore,
    data: &Dataset,
    sde: &SdeSpec,
    cfg: &TrainConfig,
) -> Result<MlpScore> {
    cfg.validate()?;
    if data.dim() != model.dim {
        return Err(Error::Shape { expected: model.dim, got: data.dim() });
    }
    if sde != &model.sde {
        return Err(Error::Config("train_score sde differs from the model's sde".into()));
    }
    let lt = layout(model.dim, model.width);
    let mut m = vec![0.0; lt.total];
    let mut v = vec![0.0; lt.total];
    for step in 0..cfg.steps {
        let mut batch_rng = stream(cfg.seed, "train-batch", &[step as u64]);
        let rows: Vec<&[f64]> = (0..cfg.batch)
            .map(|_| data.row(batch_rng.gen_range(0..data.n_samples())))
            .collect();
        let mut noise_rng = stream(cfg.seed, "train-noise", &[step as u64]);
        let draws = make_dsm_draws(&rows, sde, cfg.lambda_mode, &mut noise_rng)?;
        let (loss, grad) = model.loss_and_grad(&draws);
        if !loss.is_finite() {
            return Err(Error::Training { step, message: format!("non-finite loss {loss}") });
        }
        let bc1 = 1.0 - ADAM_BETA1.powi(step as i32 + 1);
        let bc2 = 1.0 - ADAM_BETA2.powi(step as i32 + 1);
        for i in 0..lt.total {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let update = cfg.learn_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            model.params[i] -= update;
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training { step, message: "non-finite parameters".into() });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{dsm_loss_on, LambdaMode};

    fn sde() -> SdeSpec {
        SdeSpec::ve(0.01, 50.0).unwrap()
    }

    fn toy_draws(n: usize, seed: u64) -> Vec<DsmDraw> {
        let rows_data = [vec![0.5, -0.3], vec![-0.8, 0.2]];
        let rows: Vec<&[f64]> =
            rows_data.iter().map(|r| r.as_slice()).cycle().take(n).collect();
        let s = sde();
        make_dsm_draws(&rows, &s, LambdaMode::SigmaSquared, &mut stream(seed, "draws", &[])).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let model = MlpScore::new(2, 4, sde(), 3).unwrap();
        let draws = toy_draws(2, 1);
        let (_, grad) = model.loss_and_grad(&draws);
        for i in 0..model.params.len() {
            let h = 1e-6 * (1.0 + model.params[i].abs());
            let mut mp = model.clone();
            mp.params[i] += h;
            let mut mm = model.clone();
            mm.params[i] -= h;
            let fd = (dsm_loss_on(&mp, &draws) - dsm_loss_on(&mm, &draws)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-3, "param {i}: grad={} fd={fd} rel={rel}", grad[i]);
        }
    }

    #[test]
    fn training_reduces_loss_across_seeds() {
        let data = Dataset::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let s = sde();
        let mut improved = 0;
        for seed in 0..20 {
            let cfg = TrainConfig {
                steps: 2000,
                batch: 16,
                learn_rate: 1e-2,
                lambda_mode: LambdaMode::SigmaSquared,
                seed,
            };
            let model = MlpScore::new(2, 16, s, seed).unwrap();
            let trained = train_score(model, &data, &s, &cfg).unwrap();
            let early: f64 = trained.loss_history[5..15].iter().sum::<f64>() / 10.0;
            let late: f64 =
                trained.loss_history[cfg.steps - 10..].iter().sum::<f64>() / 10.0;
            if late < early {
                improved += 1;
            }
        }
        assert!(improved >= 19, "loss decreased in only {improved}/20 seeds");
    }

    #[test]
    fn training_is_deterministic() {
        let data = Dataset::from_rows(&[vec![0.2, 0.4], vec![-0.6, 0.1]]).unwrap();
        let s = sde();
        let cfg = TrainConfig { steps: 50, batch: 8, learn_rate: 1e-2, lambda_mode: LambdaMode::None, seed: 9 };
        let a = train_score(MlpScore::new(2, 8, s, 7).unwrap(), &data, &s, &cfg).unwrap();
        let b = train_score(MlpScore::new(2, 8, s, 7).unwrap(), &data, &s, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn zero_steps_is_identity() {
        let data = Dataset::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let s = sde();
        let cfg = TrainConfig { steps: 0, ..TrainConfig::default() };
        let model = MlpScore::new(2, 8, s, 1).unwrap();
        let before = model.params.clone();
        let after = train_score(model, &data, &s, &cfg).unwrap();
        assert_eq!(before, after.params);
        assert!(after.loss_history.is_empty());
    }

    #[test]
    fn parameters_stay_finite_through_training() {
        let data = Dataset::from_rows(&[vec![0.3, -0.2], vec![0.9, 0.7]]).unwrap();
        let s = sde();
        let cfg = TrainConfig { steps: 200, batch: 8, learn_rate: 5e-2, lambda_mode: LambdaMode::SigmaSquared, seed: 2 };
        let trained = train_score(MlpScore::new(2, 8, s, 2).unwrap(), &data, &s, &cfg).unwrap();
        assert!(trained.params.iter().all(|p| p.is_finite()));
        assert_eq!(trained.loss_history.len(), 200);
    }

    #[test]
    fn serde_roundtrip_preserves_scores() {
        let model = MlpScore::new(3, 8, sde(), 11).unwrap();
        let j = serde_json::to_string(&model).unwrap();
        let back: MlpScore = serde_json::from_str(&j).unwrap();
        let x = [0.1, -0.4, 0.8];
        assert_eq!(model.score(&x, 0.3), back.score(&x, 0.3));
    }
}
