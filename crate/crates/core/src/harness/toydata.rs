//! Synthetic dataset generators: 2D Gaussian ring mixtures for likelihood
//! checks and procedural grayscale toy images (blobs and stripes) for the
//! fingerprint pipeline. Toy image intensities stay in a dark band well
//! below the fingerprint gray, so an injected patch is visually and
//! statistically distinct.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::harness::config::{DatasetKind, DatasetSpec};
use rand::Rng;
use rand_distr::StandardNormal;

/// Toy image intensities span [DARK_LO, DARK_LO + DARK_SPAN].
const DARK_LO: f64 = 0.05;
const DARK_SPAN: f64 = 0.30;

/// Minimum L2 distance between the audited row and every other toy-image
/// row. The audited regime is a set of unrelated subjects; a near-duplicate
/// of the audited subject would make the one-vs-all identity task ill-posed
/// and would let look-alike reproductions pollute the census. Other rows may
/// crowd each other freely (duplicates within one class are harmless), which
/// keeps generation feasible at any dataset size.
const MIN_SEPARATION: f64 = 1.0;

/// Redraw budget per row before generation gives up. A candidate only has
/// to clear one distance check, so the budget is generous.
const MAX_REDRAWS: usize = 200;

fn gen_mixture_2d<R: Rng>(
    n: usize,
    components: usize,
    center: (f64, f64),
    radius: f64,
    std: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let means: Vec<(f64, f64)> = (0..components)
        .map(|j| {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / components as f64;
            (center.0 + radius * angle.cos(), center.1 + radius * angle.sin())
        })
        .collect();
    (0..n)
        .map(|_| {
            let (mx, my) = means[rng.gen_range(0..components)];
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            vec![mx + std * z1, my + std * z2]
        })
        .collect()
}

fn draw_toy_image<R: Rng>(height: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let blob = rng.gen_bool(0.5);
    if blob {
        let cx = rng.gen_range(0.15..0.85) * (width.max(2) - 1) as f64;
        let cy = rng.gen_range(0.15..0.85) * (height.max(2) - 1) as f64;
        let s = rng.gen_range(0.12..0.30) * height.max(width) as f64;
        render(height, width, |x, y| {
            let dx = x - cx;
            let dy = y - cy;
            (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
        })
    } else {
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let freq = rng.gen_range(0.5..1.5);
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        render(height, width, |x, y| {
            0.5 + 0.5 * (freq * (x * theta.cos() + y * theta.sin()) + phase).sin()
        })
    }
}

fn gen_toy_images<R: Rng>(
    n: usize,
    height: usize,
    width: usize,
    protected: Option<usize>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let anchor = match protected {
        Some(p) if p < n => p,
        _ => return Ok((0..n).map(|_| draw_toy_image(height, width, rng)).collect()),
    };
    // The audited row is drawn first so every other row can be rejected
    // against it; rows then fill in index order.
    let reference = draw_toy_image(height, width, rng);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        if i == anchor {
            rows.push(reference.clone());
            continue;
        }
        let mut accepted = None;
        for _ in 0..MAX_REDRAWS {
            let candidate = draw_toy_image(height, width, rng);
            let d2: f64 = reference
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() >= MIN_SEPARATION {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(row) => rows.push(row),
            None => {
                return Err(Error::Sampling {
                    step: i,
                    message: format!(
                        "could not place row {i} at least {MIN_SEPARATION} from the \
                         audited row after {MAX_REDRAWS} draws"
                    ),
                })
            }
        }
    }
    Ok(rows)
}

fn render(height: usize, width: usize, intensity: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let v = intensity(x as f64, y as f64).clamp(0.0, 1.0);
            row.push(DARK_LO + DARK_SPAN * v);
        }
    }
    row
}

/// Draw a dataset from the generator the spec names. Deterministic given
/// the caller's RNG state; the spec's own seed field is the caller's
/// concern (the pipeline keys a stream with it). For toy images,
/// `protected` names the audited row, which is kept at least
/// [`MIN_SEPARATION`] away from every other row; mixtures ignore it.
pub fn gen_toy_dataset<R: Rng>(
    spec: &DatasetSpec,
    protected: Option<usize>,
    rng: &mut R,
) -> Result<Dataset> {
    spec.validate()?;
    let rows = match spec.kind {
        DatasetKind::GaussianMixture2d { components, center, radius, std } => {
            gen_mixture_2d(spec.n, components, center, radius, std, rng)
        }
        DatasetKind::ToyImages { height, width } => {
            gen_toy_images(spec.n, height, width, protected, rng)?
        }
    };
    Dataset::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn images_spec(n: usize) -> DatasetSpec {
        DatasetSpec { kind: DatasetKind::ToyImages { height: 8, width: 8 }, n, seed: 5 }
    }

    #[test]
    fn toy_images_shape_and_range() {
        let spec = images_spec(16);
        let ds = gen_toy_dataset(&spec, Some(0), &mut stream(spec.seed, "gen-data", &[])).unwrap();
        assert_eq!(ds.n_samples(), 16);
        assert_eq!(ds.dim(), 64);
        for &v in ds.values() {
            assert!((0.0..=1.0).contains(&v), "value {v} outside [0, 1]");
            assert!(
                (DARK_LO..=DARK_LO + DARK_SPAN + 1e-12).contains(&v),
                "value {v} outside the dark band"
            );
        }
    }

    #[test]
    fn audited_row_separated_from_all_others() {
        // 256 is the largest sweep size; generation must both terminate
        // and honor the separation floor around the audited row there.
        for n in [16usize, 256] {
            let spec = images_spec(n);
            for host in [0usize, n / 2] {
                let ds =
                    gen_toy_dataset(&spec, Some(host), &mut stream(spec.seed, "gen-data", &[]))
                        .unwrap();
                for j in 0..ds.n_samples() {
                    if j == host {
                        continue;
                    }
                    let d: f64 = ds
                        .row(host)
                        .iter()
                        .zip(ds.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    assert!(d >= MIN_SEPARATION, "n {n}: rows {host} and {j} only {d} apart");
                }
            }
        }
    }

    #[test]
    fn single_component_mixture_mean_obeys_clt_bound() {
        let spec = DatasetSpec {
            kind: DatasetKind::GaussianMixture2d {
                components: 1,
                center: (0.0, 0.0),
                radius: 0.0,
                std: 1.0,
            },
            n: 100_000,
            seed: 1,
        };
        let ds = gen_toy_dataset(&spec, None, &mut stream(spec.seed, "gen-data", &[])).unwrap();
        let mu = ds.mean();
        let norm = (mu[0] * mu[0] + mu[1] * mu[1]).sqrt();
        assert!(norm < 0.02, "|mean| = {norm}");
    }

    #[test]
    fn ring_mixture_stays_near_the_ring() {
        let spec = DatasetSpec {
            kind: DatasetKind::GaussianMixture2d {
                components: 8,
                center: (0.5, 0.5),
                radius: 0.3,
                std: 0.01,
            },
            n: 2000,
            seed: 2,
        };
        let ds = gen_toy_dataset(&spec, None, &mut stream(spec.seed, "gen-data", &[])).unwrap();
        for r in ds.rows() {
            let d = ((r[0] - 0.5).powi(2) + (r[1] - 0.5).powi(2)).sqrt();
            assert!((d - 0.3).abs() < 0.08, "radius {d} far from the ring");
        }
    }

    #[test]
    fn same_seed_gives_identical_csv_bytes() {
        let spec = images_spec(16);
        let a = gen_toy_dataset(&spec, Some(0), &mut stream(spec.seed, "gen-data", &[])).unwrap();
        let b = gen_toy_dataset(&spec, Some(0), &mut stream(spec.seed, "gen-data", &[])).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let c = gen_toy_dataset(&spec, Some(0), &mut stream(spec.seed + 1, "gen-data", &[])).unwrap();
        assert_ne!(a.to_csv_string(), c.to_csv_string());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(gen_toy_dataset(&images_spec(1), Some(0), &mut stream(0, "gen-data", &[])).is_err());
        let bad = DatasetSpec {
            kind: DatasetKind::GaussianMixture2d {
                components: 0,
                center: (0.0, 0.0),
                radius: 1.0,
                std: 1.0,
            },
            n: 4,
            seed: 0,
        };
        assert!(gen_toy_dataset(&bad, None, &mut stream(0, "gen-data", &[])).is_err());
    }


}
