//! Experiment configuration: one JSON document describing every stage of
//! the pipeline. Every field has a default, so `{}` is a valid config (a
//! memorizing oracle on 16 toy images), and the fully resolved document is
//! echoed into the report for provenance.

use crate::classifier::{AugmentationSpec, ClassifierTrainConfig};
use crate::error::{Error, Result};
use crate::fingerprint::MaskGeometry;
use crate::sampler::SamplerConfig;
use crate::score::TrainConfig;
use crate::sde::SdeSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Synthetic data generator family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetKind {
    /// 2D draws from k equally weighted Gaussians spaced on a circle.
    GaussianMixture2d { components: usize, center: (f64, f64), radius: f64, std: f64 },
    /// Procedural grayscale blob/stripe images, flattened row-major.
    ToyImages { height: usize, width: usize },
}

impl Default for DatasetKind {
    fn default() -> Self {
        DatasetKind::ToyImages { height: 8, width: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec { kind: DatasetKind::default(), n: 16, seed: 0 }
    }
}

impl DatasetSpec {
    pub fn dim(&self) -> usize {
        match self.kind {
            DatasetKind::GaussianMixture2d { .. } => 2,
            DatasetKind::ToyImages { height, width } => height * width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("dataset needs n >= 2, got {}", self.n)));
        }
        match self.kind {
            DatasetKind::GaussianMixture2d { components, radius, std, .. } => {
                if components == 0 {
                    return Err(Error::Config("mixture needs at least one component".into()));
                }
                if !(radius >= 0.0 && radius.is_finite()) || !(std > 0.0 && std.is_finite()) {
                    return Err(Error::Config(
                        "mixture radius must be >= 0 and std > 0".into(),
                    ));
                }
            }
            DatasetKind::ToyImages { height, width } => {
                if height == 0 || width == 0 {
                    return Err(Error::Config("toy images need a non-empty grid".into()));
                }
            }
        }
        Ok(())
    }
}

/// Which score model the pipeline fits to the fingerprinted data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Closed-form empirical score with bandwidth floor tau; tau = 0 is the
    /// perfect memorizer, larger tau a smoothed generalizer.
    Oracle { tau: f64 },
    /// Trained MLP score network.
    Mlp { width: usize, train: TrainConfig },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Oracle { tau: 0.0 }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Oracle { tau } => {
                if !(*tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::Config(format!("oracle tau must be >= 0, got {tau}")));
                }
            }
            ModelSpec::Mlp { width, train } => {
                if *width == 0 {
                    return Err(Error::Config("mlp width must be positive".into()));
                }
                train.validate()?;
            }
        }
        Ok(())
    }
}

/// Where and how the fingerprint is injected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FingerprintConfig {
    pub geometry: MaskGeometry,
    pub gray: f64,
    pub host_index: usize,
    pub seed: u64,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig {
            geometry: MaskGeometry::Disc { width: 8, height: 8, radius: 1.5, center: None },
            gray: 0.5,
            host_index: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub augment: AugmentationSpec,
    pub train: ClassifierTrainConfig,
}

/// Settings for the audit stage: the time grid, the Monte Carlo budget,
/// and the census size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    /// Uniform grid step on [0, 1] for the t' search.
    pub grid_step: f64,
    /// Renoise/denoise draws per grid point.
    pub m: usize,
    /// Unconditional samples in the census.
    pub n_samples: usize,
    /// Held-out rows drawn for the test-set distance.
    pub n_test: usize,
    /// Clamp generated samples to [0, 1] before classification.
    pub clamp_samples: bool,
    pub seed: u64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            grid_step: 0.02,
            m: 16,
            n_samples: 3200,
            n_test: 64,
            clamp_samples: true,
            seed: 0,
        }
    }
}

impl AuditSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("audit needs m >= 1 draws per grid point".into()));
        }
        if self.n_test < 2 {
            return Err(Error::Config("audit needs n_test >= 2 for the distance".into()));
        }
        crate::audit::uniform_grid(self.grid_step)?;
        Ok(())
    }
}

/// The complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub sde: SdeSpec,
    pub model: ModelSpec,
    pub fingerprint: FingerprintConfig,
    pub classifiers: ClassifierConfig,
    pub audit: AuditSpec,
    pub sampler: SamplerConfig,
    /// Not serialized: reports embed the config, and embedding the output
    /// path would make otherwise identical runs produce different bytes.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            sde: SdeSpec::ve(0.01, 50.0).expect("default sde is valid"),
            model: ModelSpec::default(),
            fingerprint: FingerprintConfig::default(),
            classifiers: ClassifierConfig::default(),
            audit: AuditSpec::default(),
            sampler: SamplerConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.sde.validate()?;
        self.model.validate()?;
        if !(0.0..=1.0).contains(&self.fingerprint.gray) {
            return Err(Error::Config(format!(
                "fingerprint gray must lie in [0, 1], got {}",
                self.fingerprint.gray
            )));
        }
        if self.fingerprint.host_index >= self.dataset.n {
            return Err(Error::Config(format!(
                "host index {} outside dataset of {} rows",
                self.fingerprint.host_index, self.dataset.n
            )));
        }
        self.classifiers.train.validate()?;
        self.classifiers.augment.validate()?;
        self.audit.validate()?;
        self.sampler.validate()?;
        Ok(())
    }

    /// Replace every stage seed with the given master seed. Stage RNG
    /// streams are keyed by stage name, so sharing one seed value across
    /// stages keeps the streams independent.
    pub fn apply_master_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.fingerprint.seed = seed;
        self.classifiers.train.seed = seed;
        self.audit.seed = seed;
        self.sampler.seed = seed;
        if let ModelSpec::Mlp { train, .. } = &mut self.model {
            train.seed = seed;
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_config() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.dataset.dim(), 64);
        assert!(matches!(cfg.model, ModelSpec::Oracle { tau } if tau == 0.0));
        assert_eq!(cfg.audit.n_samples, 3200);
    }

    #[test]
    fn partial_overrides_merge_with_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "dataset": {"n": 64, "seed": 3},
                "model": {"kind": "oracle", "tau": 0.5},
                "audit": {"m": 8}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.dataset.n, 64);
        assert_eq!(cfg.dataset.seed, 3);
        assert!(matches!(cfg.model, ModelSpec::Oracle { tau } if tau == 0.5));
        assert_eq!(cfg.audit.m, 8);
        assert_eq!(cfg.audit.grid_step, 0.02, "untouched fields keep defaults");
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"datasett": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dataset": {"n": 1}}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"model": {"kind": "oracle", "tau": -1.0}}"#).is_err()
        );
        assert!(ExperimentConfig::from_json(r#"{"audit": {"grid_step": 0.03}}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"fingerprint": {"host_index": 16}}"#).is_err(),
            "host index must fall inside the dataset"
        );
    }

    #[test]
    fn master_seed_reaches_every_stage() {
        let mut cfg = ExperimentConfig::default();
        cfg.model = ModelSpec::Mlp { width: 32, train: TrainConfig::default() };
        cfg.apply_master_seed(99);
        assert_eq!(cfg.dataset.seed, 99);
        assert_eq!(cfg.fingerprint.seed, 99);
        assert_eq!(cfg.classifiers.train.seed, 99);
        assert_eq!(cfg.audit.seed, 99);
        assert_eq!(cfg.sampler.seed, 99);
        match cfg.model {
            ModelSpec::Mlp { train, .. } => assert_eq!(train.seed, 99),
            ModelSpec::Oracle { .. } => panic!("wrong variant"),
        }
    }

    #[test]
    fn roundtrip_preserves_the_document() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.kind =
            DatasetKind::GaussianMixture2d { components: 4, center: (0.5, 0.5), radius: 0.3, std: 0.08 };
        cfg.dataset.n = 32;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
