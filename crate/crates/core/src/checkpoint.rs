//! Persistence for fitted artifacts. Everything goes through one JSON
//! envelope (`format`, `version`, `kind`, `payload`) so a loader can
//! reject foreign or stale files with a clear error instead of a partial
//! deserialization.

use crate::classifier::LinearClassifier;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::score::{EmpiricalOracle, MlpScore, ScoreModel};
use crate::sde::SdeSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "safaudit-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_ORACLE: &str = "model/oracle";
const KIND_MLP: &str = "model/mlp";
const KIND_CLASSIFIER: &str = "classifier";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format: String,
    version: u32,
    kind: String,
    payload: serde_json::Value,
}

fn seal(kind: &str, payload: serde_json::Value) -> Envelope {
    Envelope {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        payload,
    }
}

fn open(text: &str, want_kind: &str) -> Result<serde_json::Value> {
    let env: Envelope = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("checkpoint envelope: {e}")))?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unrecognized checkpoint format `{}`", env.format)));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            env.version
        )));
    }
    if env.kind != want_kind {
        return Err(Error::Format(format!(
            "checkpoint holds `{}`, expected `{want_kind}`",
            env.kind
        )));
    }
    Ok(env.payload)
}

/// A fitted score model of either flavor, dispatching the trait calls.
#[derive(Clone, Debug)]
pub enum Model {
    Oracle(EmpiricalOracle),
    Mlp(MlpScore),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Oracle(_) => KIND_ORACLE,
            Model::Mlp(_) => KIND_MLP,
        }
    }
}

impl ScoreModel for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Oracle(m) => m.dim(),
            Model::Mlp(m) => m.dim(),
        }
    }

    fn sde(&self) -> &SdeSpec {
        match self {
            Model::Oracle(m) => m.sde(),
            Model::Mlp(m) => m.sde(),
        }
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self {
            Model::Oracle(m) => m.score(x, t),
            Model::Mlp(m) => m.score(x, t),
        }
    }

    fn score_divergence(&self, x: &[f64], t: f64) -> Option<f64> {
        match self {
            Model::Oracle(m) => m.score_divergence(x, t),
            Model::Mlp(m) => m.score_divergence(x, t),
        }
    }
}

/// Oracle payload: the dataset travels inside the checkpoint together
/// with its hash, so a loaded model is verifiably the one that was saved.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OraclePayload {
    tau: f64,
    sde: SdeSpec,
    n: usize,
    d: usize,
    values: Vec<f64>,
    data_sha256: String,
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let env = match model {
        Model::Oracle(m) => {
            let ds = m.dataset();
            let payload = OraclePayload {
                tau: m.tau(),
                sde: *m.sde(),
                n: ds.n_samples(),
                d: ds.dim(),
                values: ds.rows().flatten().copied().collect(),
                data_sha256: ds.sha256_hex(),
            };
            seal(KIND_ORACLE, serde_json::to_value(payload).expect("payload serializes"))
        }
        Model::Mlp(m) => {
            seal(KIND_MLP, serde_json::to_value(m).expect("payload serializes"))
        }
    };
    Ok(serde_json::to_string_pretty(&env).expect("envelope serializes"))
}

pub fn model_from_string(text: &str) -> Result<Model> {
    // Peek at the kind to pick the payload type.
    let env: Envelope = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("checkpoint envelope: {e}")))?;
    match env.kind.as_str() {
        KIND_ORACLE => {
            let payload = open(text, KIND_ORACLE)?;
            let p: OraclePayload = serde_json::from_value(payload)
                .map_err(|e| Error::Format(format!("oracle payload: {e}")))?;
            let dataset = Dataset::new(p.n, p.d, p.values)?;
            if dataset.sha256_hex() != p.data_sha256 {
                return Err(Error::Format(
                    "oracle dataset hash does not match the stored digest".into(),
                ));
            }
            Ok(Model::Oracle(EmpiricalOracle::new(dataset, p.sde, p.tau)?))
        }
        KIND_MLP => {
            let payload = open(text, KIND_MLP)?;
            let m: MlpScore = serde_json::from_value(payload)
                .map_err(|e| Error::Format(format!("mlp payload: {e}")))?;
            m.sde().validate()?;
            Ok(Model::Mlp(m))
        }
        other => Err(Error::Format(format!("checkpoint holds `{other}`, expected a model"))),
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_string(&std::fs::read_to_string(path)?)
}

pub fn classifier_to_string(c: &LinearClassifier) -> Result<String> {
    let env = seal(KIND_CLASSIFIER, serde_json::to_value(c).expect("payload serializes"));
    Ok(serde_json::to_string_pretty(&env).expect("envelope serializes"))
}

pub fn classifier_from_string(text: &str) -> Result<LinearClassifier> {
    let payload = open(text, KIND_CLASSIFIER)?;
    serde_json::from_value(payload).map_err(|e| Error::Format(format!("classifier payload: {e}")))
}

pub fn save_classifier(c: &LinearClassifier, path: &Path) -> Result<()> {
    std::fs::write(path, classifier_to_string(c)?)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<LinearClassifier> {
    classifier_from_string(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierKind;

    fn toy_oracle() -> Model {
        let rows = vec![vec![0.1, 0.9, 0.4], vec![0.8, 0.2, 0.6], vec![0.5, 0.5, 0.5]];
        let ds = Dataset::from_rows(&rows).unwrap();
        let sde = SdeSpec::ve(0.01, 50.0).unwrap();
        Model::Oracle(EmpiricalOracle::new(ds, sde, 0.05).unwrap())
    }

    #[test]
    fn oracle_roundtrip_preserves_scores() {
        let model = toy_oracle();
        let text = model_to_string(&model).unwrap();
        let back = model_from_string(&text).unwrap();
        assert_eq!(back.kind(), KIND_ORACLE);
        let x = [0.3, 0.7, 0.55];
        for &t in &[0.05, 0.5, 0.95] {
            assert_eq!(model.score(&x, t), back.score(&x, t));
            assert_eq!(model.score_divergence(&x, t), back.score_divergence(&x, t));
        }
        match back {
            Model::Oracle(m) => assert_eq!(m.tau(), 0.05),
            Model::Mlp(_) => panic!("wrong variant"),
        }
    }

    #[test]
    fn mlp_roundtrip_preserves_scores() {
        let sde = SdeSpec::sub_vp(0.1, 20.0).unwrap();
        let mlp = MlpScore::new(4, 16, sde, 7).unwrap();
        let model = Model::Mlp(mlp);
        let text = model_to_string(&model).unwrap();
        let back = model_from_string(&text).unwrap();
        assert_eq!(back.kind(), KIND_MLP);
        let x = [0.2, -0.4, 1.3, 0.0];
        for &t in &[0.01, 0.4, 1.0] {
            assert_eq!(model.score(&x, t), back.score(&x, t));
        }
        assert!(back.score_divergence(&x, 0.5).is_none());
    }

    #[test]
    fn classifier_roundtrip() {
        let c = LinearClassifier {
            kind: ClassifierKind::IdDetector,
            weights: vec![0.25, -1.5, 0.0],
            bias: 0.125,
            threshold: 0.5,
            val_accuracy: 0.9921875,
        };
        let text = classifier_to_string(&c).unwrap();
        let back = classifier_from_string(&text).unwrap();
        assert_eq!(back.weights, c.weights);
        assert_eq!(back.bias, c.bias);
        assert_eq!(back.val_accuracy, c.val_accuracy);
    }

    #[test]
    fn foreign_and_stale_envelopes_rejected() {
        let good = model_to_string(&toy_oracle()).unwrap();
        let wrong_format = good.replace("safaudit-checkpoint", "other-tool");
        assert!(matches!(model_from_string(&wrong_format), Err(Error::Format(_))));
        let wrong_version = good.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(model_from_string(&wrong_version), Err(Error::Format(_))));
        assert!(matches!(model_from_string("{not json"), Err(Error::Format(_))));
    }

    #[test]
    fn kind_mismatch_rejected() {
        let c = LinearClassifier {
            kind: ClassifierKind::SafDetector,
            weights: vec![1.0],
            bias: 0.0,
            threshold: 0.5,
            val_accuracy: 1.0,
        };
        let as_classifier = classifier_to_string(&c).unwrap();
        assert!(matches!(model_from_string(&as_classifier), Err(Error::Format(_))));
        let as_model = model_to_string(&toy_oracle()).unwrap();
        assert!(matches!(classifier_from_string(&as_model), Err(Error::Format(_))));
    }

    #[test]
    fn tampered_oracle_data_rejected() {
        let text = model_to_string(&toy_oracle()).unwrap();
        // Flip one stored value without touching the digest.
        let tampered = text.replace("0.9,", "0.91,");
        assert_ne!(text, tampered, "edit must land");
        assert!(matches!(model_from_string(&tampered), Err(Error::Format(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = toy_oracle();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        let x = [0.4, 0.1, 0.8];
        assert_eq!(model.score(&x, 0.3), back.score(&x, 0.3));
    }
}
