//! Fréchet distance between Gaussian fits of two sample sets: the
//! Wasserstein-2 distance assuming normality, computed on raw vectors.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

const REG_EPS: f64 = 1e-6;

fn gaussian_fit(rows: &[Vec<f64>], d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut mu = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mu[j] += r[j];
        }
    }
    for m in mu.iter_mut() {
        *m /= n as f64;
    }
    // Population (1/n) covariance, regularized toward invertibility.
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            let ci = r[i] - mu[i];
            for j in i..d {
                cov[(i, j)] += ci * (r[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += REG_EPS;
    }
    (mu, cov)
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// from roundoff are clamped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..d {
        // Quarter power per column so scaled * scaled^T = U sqrt(L) U^T.
        let s = eig.eigenvalues[j].max(0.0).powf(0.25);
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * scaled.transpose()
}

/// ||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^(1/2)) on Gaussian fits
/// of the two sets. Covariances are population (1/n) estimates with a
/// 1e-6 diagonal regularizer, so degenerate sets are handled.
pub fn frechet_gaussian_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain(format!(
            "frechet distance needs at least 2 rows per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d = a[0].len();
    if d == 0 || a.iter().chain(b).any(|r| r.len() != d) {
        return Err(Error::Shape { expected: d, got: 0 });
    }
    if a.iter().chain(b).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("frechet distance inputs must be finite".into()));
    }
    let (mu_a, cov_a) = gaussian_fit(a, d);
    let (mu_b, cov_b) = gaussian_fit(b, d);
    let mean_sq: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    // tr((S_A S_B)^(1/2)) via the symmetric form sqrt(sqrt(S_A) S_B sqrt(S_A)),
    // which shares its eigenvalues with S_A S_B but stays symmetric PSD.
    let root_a = sqrt_psd(&cov_a);
    let inner = &root_a * &cov_b * &root_a;
    let cross = sqrt_psd(&inner);
    let trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    Ok((mean_sq + trace_term).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_sets_have_zero_distance() {
        let a: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64 * 0.1, (i as f64 * 0.3).sin(), 1.0 - i as f64 * 0.05])
            .collect();
        let d = frechet_gaussian_distance(&a, &a).unwrap();
        assert!(d < 1e-8, "d = {d}");
    }

    #[test]
    fn one_dimensional_mean_shift_closed_form() {
        // {-1, +1} and {0, 2}: equal population variance 1, mean shift 1,
        // so the Gaussian Frechet distance is exactly 1.
        let a = vec![vec![-1.0], vec![1.0]];
        let b = vec![vec![0.0], vec![2.0]];
        let d = frechet_gaussian_distance(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-8, "d = {d}");
    }

    #[test]
    fn symmetric_in_its_arguments() {
        let mut rng = stream(4, "fd", &[]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, shift: f64| -> Vec<Vec<f64>> {
            (0..40)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            let z: f64 = rng.sample(StandardNormal);
                            shift + z
                        })
                        .collect()
                })
                .collect()
        };
        let a = draw(&mut rng, 0.0);
        let b = draw(&mut rng, 0.7);
        let ab = frechet_gaussian_distance(&a, &b).unwrap();
        let ba = frechet_gaussian_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-10, "ab = {ab}, ba = {ba}");
        assert!(ab > 0.0);
    }

    #[test]
    fn diagonal_gaussians_match_analytic_value() {
        // Large samples from N(0, diag(1, 4)) vs N((1, 0), diag(1, 1)):
        // analytic distance = 1 + (2 - 1)^2 = 2.
        let mut rng = stream(9, "fd-diag", &[]);
        let n = 60_000;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            a.push(vec![z1, 2.0 * z2]);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            b.push(vec![1.0 + z1, z2]);
        }
        let d = frechet_gaussian_distance(&a, &b).unwrap();
        assert!((d - 2.0).abs() < 0.05, "d = {d}");
    }

    #[test]
    fn degenerate_covariance_is_regularized() {
        // All points identical: population covariance is zero; the
        // regularizer keeps the computation finite.
        let a = vec![vec![0.5, 0.5]; 5];
        let b = vec![vec![0.5, 1.5]; 5];
        let d = frechet_gaussian_distance(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "d = {d}");
    }

    #[test]
    fn invalid_inputs_rejected() {
        let a = vec![vec![0.0, 1.0]];
        let b = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(frechet_gaussian_distance(&a, &b), Err(Error::Domain(_))));
        let ragged = vec![vec![0.0, 1.0], vec![1.0]];
        assert!(matches!(frechet_gaussian_distance(&ragged, &b), Err(Error::Shape { .. })));
        let nan = vec![vec![f64::NAN, 0.0], vec![0.0, 0.0]];
        assert!(matches!(frechet_gaussian_distance(&nan, &b), Err(Error::Domain(_))));
    }
}
