//! Pipeline orchestration: run every stage of an experiment from one
//! config, write the artifacts, and emit a report plus a manifest of
//! content hashes. Each stage is also callable on its own so the CLI can
//! script them independently.

pub mod config;
pub mod plot;
pub mod toydata;

pub use config::ExperimentConfig;

use crate::audit::{
    census, darboux_bound, find_t_prime, frechet_gaussian_distance, mae_to_target, uniform_grid,
    Adversary, AuditReport, CensusOutcome,
};
use crate::checkpoint::{save_classifier, save_model, Model};
use crate::classifier::{train_id_classifier, train_saf_classifier, LinearClassifier};
use crate::data::{sha256_file, Dataset};
use crate::error::{Error, Result};
use crate::fingerprint::{build_saf_dataset, SafDataset};
use crate::rng::stream;
use crate::score::{train_score, EmpiricalOracle, MlpScore};
use crate::sde::SdeSpec;
use config::ModelSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FILE_DATA: &str = "data.csv";
pub const FILE_SAF_STEM: &str = "saf";
pub const FILE_MODEL: &str = "model.json";
pub const FILE_CP: &str = "c_p.json";
pub const FILE_CID: &str = "c_id.json";
pub const FILE_Q_CURVE_CSV: &str = "q_curve.csv";
pub const FILE_Q_CURVE_SVG: &str = "q_curve.svg";
pub const FILE_REPORT: &str = "report.json";
pub const FILE_MANIFEST: &str = "manifest.json";
pub const FILE_SWEEP: &str = "sweep.csv";

/// Generate the base dataset from the config's generator spec. The row the
/// fingerprint will land in is kept separated from the rest so the audited
/// subject has no look-alikes.
pub fn gen_base(cfg: &ExperimentConfig) -> Result<Dataset> {
    toydata::gen_toy_dataset(
        &cfg.dataset,
        Some(cfg.fingerprint.host_index),
        &mut stream(cfg.dataset.seed, "gen-data", &[]),
    )
}

/// Held-out rows from the same generator, on a disjoint RNG stream.
pub fn gen_test_rows(cfg: &ExperimentConfig) -> Result<Dataset> {
    let mut spec = cfg.dataset.clone();
    spec.n = cfg.audit.n_test;
    toydata::gen_toy_dataset(&spec, None, &mut stream(cfg.dataset.seed, "test-data", &[]))
}

/// Inject the fingerprint into the configured host row.
pub fn inject(cfg: &ExperimentConfig, base: &Dataset) -> Result<SafDataset> {
    build_saf_dataset(
        base,
        &cfg.fingerprint.geometry,
        cfg.fingerprint.gray,
        cfg.fingerprint.host_index,
        &mut stream(cfg.fingerprint.seed, "saf-place", &[]),
    )
}

/// Fit or construct the configured score model on the fingerprinted data.
pub fn fit_model(spec: &ModelSpec, data: &Dataset, sde: &SdeSpec) -> Result<Model> {
    match spec {
        ModelSpec::Oracle { tau } => {
            Ok(Model::Oracle(EmpiricalOracle::new(data.clone(), *sde, *tau)?))
        }
        ModelSpec::Mlp { width, train } => {
            let init = MlpScore::new(data.dim(), *width, *sde, train.seed)?;
            Ok(Model::Mlp(train_score(init, data, sde, train)?))
        }
    }
}

/// Train the fingerprint detector and the identity classifier.
pub fn train_classifiers(
    cfg: &ExperimentConfig,
    saf: &SafDataset,
) -> Result<(LinearClassifier, LinearClassifier)> {
    let c_p = train_saf_classifier(saf, &cfg.classifiers.augment, &cfg.classifiers.train)?;
    let c_id = train_id_classifier(saf, &cfg.classifiers.augment, &cfg.classifiers.train)?;
    Ok((c_p, c_id))
}

/// Everything the audit stage computes. The census samples are returned
/// alongside the report so callers can persist or inspect them.
pub struct AuditOutcome {
    pub report: AuditReport,
    pub census: CensusOutcome,
}

/// Run the full audit against a fitted model: census, t' search, Darboux
/// bounds, distances to train/test sets, and reproduction forensics.
pub fn run_audit(
    cfg: &ExperimentConfig,
    model: &Model,
    saf: &SafDataset,
    c_p: &LinearClassifier,
    c_id: &LinearClassifier,
) -> Result<AuditOutcome> {
    let adv = Adversary { c_p, c_id, clamp_samples: cfg.audit.clamp_samples };
    let census_out = census(
        model,
        &cfg.sde,
        &adv,
        cfg.audit.n_samples,
        saf.data.n_samples(),
        &cfg.sampler,
        cfg.audit.seed,
    )?;
    let grid = uniform_grid(cfg.audit.grid_step)?;
    let (t_prime, q_curve) = find_t_prime(
        model,
        &cfg.sde,
        &adv,
        &saf.x_p,
        &grid,
        cfg.audit.m,
        &cfg.sampler,
        cfg.audit.seed,
    )?;
    let darboux = darboux_bound(&q_curve, &cfg.sde)?;
    let train_rows: Vec<Vec<f64>> = saf.data.rows().map(|r| r.to_vec()).collect();
    let test_rows: Vec<Vec<f64>> = gen_test_rows(cfg)?.rows().map(|r| r.to_vec()).collect();
    let fd_train = frechet_gaussian_distance(&census_out.samples, &train_rows)?;
    let fd_test = frechet_gaussian_distance(&census_out.samples, &test_rows)?;
    let mae_stats = if census_out.q_positive.is_empty() {
        None
    } else {
        let hits: Vec<Vec<f64>> =
            census_out.q_positive.iter().map(|&i| census_out.samples[i].clone()).collect();
        Some(mae_to_target(&hits, &saf.x_p)?)
    };
    let t_prime_wilson = AuditReport::wilson_at_t_prime(&q_curve, t_prime)?;
    let report = AuditReport {
        t_prime,
        t_prime_wilson,
        q_curve,
        darboux,
        census: census_out.record.clone(),
        fd_train,
        fd_test,
        mae_stats,
    };
    report.validate()?;
    Ok(AuditOutcome { report, census: census_out })
}

/// The full experiment record: the resolved config, stage digests, and
/// the audit results. Serialized as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub data_sha256: String,
    pub saf_data_sha256: String,
    pub mask_size: usize,
    pub model_kind: String,
    pub cp_val_accuracy: f64,
    pub cid_val_accuracy: f64,
    pub audit: AuditReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSeeds {
    dataset: u64,
    fingerprint: u64,
    classifiers: u64,
    audit: u64,
    sampler: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    model_train: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    sha256: String,
    bytes: u64,
}

/// Inventory of every artifact a run produced, with content hashes; no
/// timestamps, so identical runs write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    format: String,
    version: u32,
    seeds: ManifestSeeds,
    files: Vec<ManifestEntry>,
}

fn write_manifest(out_dir: &Path, cfg: &ExperimentConfig, names: &[String]) -> Result<()> {
    let mut sorted = names.to_vec();
    sorted.sort();
    let files = sorted
        .iter()
        .map(|name| {
            let path = out_dir.join(name);
            Ok(ManifestEntry {
                name: name.clone(),
                sha256: sha256_file(&path)?,
                bytes: std::fs::metadata(&path)?.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format: "safaudit-manifest".to_string(),
        version: 1,
        seeds: ManifestSeeds {
            dataset: cfg.dataset.seed,
            fingerprint: cfg.fingerprint.seed,
            classifiers: cfg.classifiers.train.seed,
            audit: cfg.audit.seed,
            sampler: cfg.sampler.seed,
            model_train: match &cfg.model {
                ModelSpec::Oracle { .. } => None,
                ModelSpec::Mlp { train, .. } => Some(train.seed),
            },
        },
        files,
    };
    std::fs::write(
        out_dir.join(FILE_MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

/// Execute the whole pipeline and write every artifact into the config's
/// output directory. Fails with a stage-tagged error; artifacts written
/// before the failure are left in place.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.as_path();
    let mut written: Vec<String> = Vec::new();

    let base = gen_base(cfg).map_err(|e| e.in_stage("gen-data"))?;
    base.write_csv(&out.join(FILE_DATA)).map_err(|e| e.in_stage("gen-data"))?;
    written.push(FILE_DATA.to_string());

    let saf = inject(cfg, &base).map_err(|e| e.in_stage("inject-saf"))?;
    saf.save(&out.join(FILE_SAF_STEM), cfg.fingerprint.seed)
        .map_err(|e| e.in_stage("inject-saf"))?;
    written.push(format!("{FILE_SAF_STEM}.csv"));
    written.push(format!("{FILE_SAF_STEM}.json"));

    let model = fit_model(&cfg.model, &saf.data, &cfg.sde).map_err(|e| e.in_stage("fit"))?;
    save_model(&model, &out.join(FILE_MODEL)).map_err(|e| e.in_stage("fit"))?;
    written.push(FILE_MODEL.to_string());

    let (c_p, c_id) = train_classifiers(cfg, &saf).map_err(|e| e.in_stage("train-classifiers"))?;
    save_classifier(&c_p, &out.join(FILE_CP)).map_err(|e| e.in_stage("train-classifiers"))?;
    save_classifier(&c_id, &out.join(FILE_CID)).map_err(|e| e.in_stage("train-classifiers"))?;
    written.push(FILE_CP.to_string());
    written.push(FILE_CID.to_string());

    let audit = run_audit(cfg, &model, &saf, &c_p, &c_id).map_err(|e| e.in_stage("audit"))?;
    audit
        .report
        .q_curve
        .write_csv(&out.join(FILE_Q_CURVE_CSV))
        .map_err(|e| e.in_stage("audit"))?;
    written.push(FILE_Q_CURVE_CSV.to_string());
    plot::emit_plot(&audit.report.q_curve, audit.report.t_prime, &out.join(FILE_Q_CURVE_SVG))
        .map_err(|e| e.in_stage("audit"))?;
    written.push(FILE_Q_CURVE_SVG.to_string());

    let report = ExperimentReport {
        config: cfg.clone(),
        data_sha256: base.sha256_hex(),
        saf_data_sha256: saf.data.sha256_hex(),
        mask_size: saf.spec.mask.iter().filter(|&&b| b).count(),
        model_kind: model.kind().to_string(),
        cp_val_accuracy: c_p.val_accuracy,
        cid_val_accuracy: c_id.val_accuracy,
        audit: audit.report,
    };
    std::fs::write(
        out.join(FILE_REPORT),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| Error::from(e).in_stage("report"))?;
    written.push(FILE_REPORT.to_string());

    write_manifest(out, cfg, &written).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}

fn sweep_csv_line(n: usize, r: &ExperimentReport) -> String {
    let (min_mae, mean_mae) = match r.audit.mae_stats {
        Some(m) => (m.min.to_string(), m.mean.to_string()),
        None => (String::new(), String::new()),
    };
    format!(
        "{n},{},{},{},{},{},{},{},{},{},{},{min_mae},{mean_mae},{},{}\n",
        r.audit.t_prime,
        r.audit.census.count_cp,
        r.audit.census.count_cid,
        r.audit.census.count_q,
        r.audit.census.expected_q,
        r.audit.census.p_value,
        r.audit.darboux.riemann,
        r.audit.darboux.upper,
        r.audit.fd_train,
        r.audit.fd_test,
        r.cp_val_accuracy,
        r.cid_val_accuracy
    )
}

/// Run the pipeline once per dataset size, each into its own
/// subdirectory, and write one combined summary CSV.
pub fn run_sweep(base: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<(usize, ExperimentReport)>> {
    if sizes.is_empty() {
        return Err(Error::Config("sweep needs at least one dataset size".into()));
    }
    std::fs::create_dir_all(&base.out_dir)?;
    let mut csv = String::from(
        "n,t_prime,count_cp,count_cid,count_q,expected_q,p_value,darboux_riemann,\
         darboux_upper,fd_train,fd_test,min_mae,mean_mae,cp_val_accuracy,cid_val_accuracy\n",
    );
    let mut reports = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut cfg = base.clone();
        cfg.dataset.n = n;
        cfg.out_dir = base.out_dir.join(format!("n{n:04}"));
        let report = run_experiment(&cfg)?;
        csv.push_str(&sweep_csv_line(n, &report));
        reports.push((n, report));
    }
    std::fs::write(base.out_dir.join(FILE_SWEEP), csv)?;
    Ok(reports)
}

/// Paths of the artifacts a pipeline stage reads or writes.
pub fn artifact_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}
