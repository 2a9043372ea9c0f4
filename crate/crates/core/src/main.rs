//! Command-line driver for the memorization audit pipeline. Each stage of
//! `report` is also exposed as its own subcommand reading and writing the
//! documented artifact files, so runs can be scripted piecewise.

use clap::{Parser, Subcommand};
use safaudit::audit::{census, find_t_prime, find_t_prime_bisect, uniform_grid, Adversary};
use safaudit::checkpoint::{load_classifier, load_model, save_classifier, save_model, Model};
use safaudit::data::Dataset;
use safaudit::fingerprint::SafDataset;
use safaudit::harness::plot::emit_plot;
use safaudit::harness::{
    artifact_path, fit_model, gen_base, inject, run_experiment, run_sweep, train_classifiers,
    ExperimentConfig, FILE_CID, FILE_CP, FILE_DATA, FILE_MODEL, FILE_Q_CURVE_CSV, FILE_Q_CURVE_SVG,
    FILE_REPORT, FILE_SAF_STEM, FILE_SWEEP,
};
use safaudit::likelihood::{exact_nll, DivMode, NllConfig};
use safaudit::rng::stream;
use safaudit::sampler::sample_unconditional;
use safaudit::{Error, Result};
use serde::Serialize;
use std::path::PathBuf;

const FILE_SAMPLES: &str = "samples.csv";
const FILE_NLL: &str = "nll.json";
const FILE_CENSUS: &str = "census.json";
const FILE_CENSUS_SAMPLES: &str = "census_samples.csv";
const FILE_TPRIME: &str = "tprime.json";

#[derive(Parser)]
#[command(name = "safaudit", version, about = "Memorization audit for score-based generative models")]
struct Cli {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count. Results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the base dataset (data.csv).
    GenData,
    /// Inject the fingerprint into the host row (saf.csv + saf.json).
    InjectSaf,
    /// Fit or construct the score model on the fingerprinted data (model.json).
    Fit,
    /// Train the fingerprint detector and the identity classifier.
    TrainClassifiers,
    /// Draw unconditional samples from the fitted model (samples.csv).
    Sample {
        /// Number of samples.
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Exact negative log-likelihood of dataset rows under the model (nll.json).
    Nll {
        /// CSV of rows to evaluate; defaults to the fingerprinted dataset.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sample census: unconditional draws judged by both classifiers.
    Census,
    /// Grid search for the privacy indicator t' (tprime.json, q_curve.csv/svg).
    Tprime {
        /// Bisection instead of the exhaustive descending scan.
        #[arg(long)]
        bisect: bool,
    },
    /// Run the whole pipeline: all stages, report.json, manifest.json.
    Report,
    /// Run the pipeline per dataset size and write a combined sweep.csv.
    Sweep {
        /// Comma-separated dataset sizes.
        #[arg(long, value_delimiter = ',', default_values_t = vec![16, 64, 256])]
        sizes: Vec<usize>,
    },
}

#[derive(Serialize)]
struct NllRow {
    row: usize,
    nll_nats: f64,
    bits_per_dim: f64,
}

#[derive(Serialize)]
struct NllReport {
    div_mode: DivMode,
    rows: Vec<NllRow>,
    mean_nll_nats: f64,
    mean_bits_per_dim: f64,
}

#[derive(Serialize)]
struct TprimeReport {
    t_prime: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wilson_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wilson_high: Option<f64>,
    bisect: bool,
    evaluations: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_master_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone();

    match cli.command {
        Command::GenData => {
            std::fs::create_dir_all(&out)?;
            let data = gen_base(&cfg)?;
            let path = artifact_path(&out, FILE_DATA);
            data.write_csv(&path)?;
            println!("wrote {} ({} rows x {})", path.display(), data.n_samples(), data.dim());
        }
        Command::InjectSaf => {
            let base = Dataset::read_csv(&artifact_path(&out, FILE_DATA))?;
            let saf = inject(&cfg, &base)?;
            saf.save(&artifact_path(&out, FILE_SAF_STEM), cfg.fingerprint.seed)?;
            println!(
                "wrote {}.csv/.json (host row {}, mask {} px)",
                artifact_path(&out, FILE_SAF_STEM).display(),
                saf.saf_row,
                saf.spec.mask.iter().filter(|&&b| b).count()
            );
        }
        Command::Fit => {
            let data = Dataset::read_csv(&saf_csv(&out))?;
            let model = fit_model(&cfg.model, &data, &cfg.sde)?;
            let path = artifact_path(&out, FILE_MODEL);
            save_model(&model, &path)?;
            println!("wrote {} ({})", path.display(), model.kind());
        }
        Command::TrainClassifiers => {
            let saf = SafDataset::load(&artifact_path(&out, FILE_SAF_STEM))?;
            let (c_p, c_id) = train_classifiers(&cfg, &saf)?;
            save_classifier(&c_p, &artifact_path(&out, FILE_CP))?;
            save_classifier(&c_id, &artifact_path(&out, FILE_CID))?;
            println!(
                "wrote {} (val {:.4}) and {} (val {:.4})",
                artifact_path(&out, FILE_CP).display(),
                c_p.val_accuracy,
                artifact_path(&out, FILE_CID).display(),
                c_id.val_accuracy
            );
        }
        Command::Sample { n } => {
            if n == 0 {
                return Err(Error::Config("sample count must be positive".into()));
            }
            let model = load_model(&artifact_path(&out, FILE_MODEL))?;
            cfg.sampler.validate()?;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut rng = stream(cfg.sampler.seed, "sample", &[i as u64]);
                    sample_unconditional(&model, &cfg.sde, &cfg.sampler, &mut rng)
                })
                .collect::<Result<_>>()?;
            let path = artifact_path(&out, FILE_SAMPLES);
            Dataset::from_rows(&rows)?.write_csv(&path)?;
            println!("wrote {} ({} samples)", path.display(), n);
        }
        Command::Nll { input } => {
            let model = load_model(&artifact_path(&out, FILE_MODEL))?;
            let data = Dataset::read_csv(&input.unwrap_or_else(|| saf_csv(&out)))?;
            // The oracle exposes its divergence in closed form; the MLP
            // needs stochastic probes.
            let div_mode = match model {
                Model::Oracle(_) => DivMode::Analytic,
                Model::Mlp(_) => DivMode::Hutchinson { probes: 16 },
            };
            let nll_cfg = NllConfig { div_mode, seed: cfg.audit.seed, ..NllConfig::default() };
            let mut rows = Vec::with_capacity(data.n_samples());
            for (i, row) in data.rows().enumerate() {
                let r = exact_nll(&model, &cfg.sde, row, &nll_cfg)?;
                rows.push(NllRow { row: i, nll_nats: r.nll_nats, bits_per_dim: r.bits_per_dim });
            }
            let n = rows.len() as f64;
            let report = NllReport {
                div_mode,
                mean_nll_nats: rows.iter().map(|r| r.nll_nats).sum::<f64>() / n,
                mean_bits_per_dim: rows.iter().map(|r| r.bits_per_dim).sum::<f64>() / n,
                rows,
            };
            let path = artifact_path(&out, FILE_NLL);
            std::fs::write(&path, serde_json::to_string_pretty(&report).expect("serializes"))?;
            println!("wrote {} (mean {:.4} bits/dim)", path.display(), report.mean_bits_per_dim);
        }
        Command::Census => {
            let model = load_model(&artifact_path(&out, FILE_MODEL))?;
            let c_p = load_classifier(&artifact_path(&out, FILE_CP))?;
            let c_id = load_classifier(&artifact_path(&out, FILE_CID))?;
            let data = Dataset::read_csv(&saf_csv(&out))?;
            let adv = Adversary { c_p: &c_p, c_id: &c_id, clamp_samples: cfg.audit.clamp_samples };
            let outcome = census(
                &model,
                &cfg.sde,
                &adv,
                cfg.audit.n_samples,
                data.n_samples(),
                &cfg.sampler,
                cfg.audit.seed,
            )?;
            std::fs::write(
                artifact_path(&out, FILE_CENSUS),
                serde_json::to_string_pretty(&outcome.record).expect("serializes"),
            )?;
            Dataset::from_rows(&outcome.samples)?
                .write_csv(&artifact_path(&out, FILE_CENSUS_SAMPLES))?;
            println!(
                "census: {} samples, c_p {} c_id {} joint {} (expected {:.1}), p = {:.3e}",
                outcome.record.n_samples,
                outcome.record.count_cp,
                outcome.record.count_cid,
                outcome.record.count_q,
                outcome.record.expected_q,
                outcome.record.p_value
            );
        }
        Command::Tprime { bisect } => {
            let model = load_model(&artifact_path(&out, FILE_MODEL))?;
            let c_p = load_classifier(&artifact_path(&out, FILE_CP))?;
            let c_id = load_classifier(&artifact_path(&out, FILE_CID))?;
            let saf = SafDataset::load(&artifact_path(&out, FILE_SAF_STEM))?;
            let adv = Adversary { c_p: &c_p, c_id: &c_id, clamp_samples: cfg.audit.clamp_samples };
            let grid = uniform_grid(cfg.audit.grid_step)?;
            let search = if bisect { find_t_prime_bisect } else { find_t_prime };
            let (t_prime, curve) = search(
                &model,
                &cfg.sde,
                &adv,
                &saf.x_p,
                &grid,
                cfg.audit.m,
                &cfg.sampler,
                cfg.audit.seed,
            )?;
            curve.write_csv(&artifact_path(&out, FILE_Q_CURVE_CSV))?;
            emit_plot(&curve, t_prime, &artifact_path(&out, FILE_Q_CURVE_SVG))?;
            let wilson = safaudit::audit::AuditReport::wilson_at_t_prime(&curve, t_prime)?;
            let report = TprimeReport {
                t_prime,
                wilson_low: wilson.map(|w| w.0),
                wilson_high: wilson.map(|w| w.1),
                bisect,
                evaluations: curve.grid.len(),
            };
            std::fs::write(
                artifact_path(&out, FILE_TPRIME),
                serde_json::to_string_pretty(&report).expect("serializes"),
            )?;
            println!("t' = {t_prime} ({} grid evaluations)", report.evaluations);
        }
        Command::Report => {
            let report = run_experiment(&cfg)?;
            println!(
                "t' = {}, census joint {} / {} (p = {:.3e}), report at {}",
                report.audit.t_prime,
                report.audit.census.count_q,
                report.audit.census.n_samples,
                report.audit.census.p_value,
                artifact_path(&out, FILE_REPORT).display()
            );
        }
        Command::Sweep { sizes } => {
            let reports = run_sweep(&cfg, &sizes)?;
            for (n, r) in &reports {
                println!(
                    "n = {n}: t' = {}, joint {} / {}",
                    r.audit.t_prime, r.audit.census.count_q, r.audit.census.n_samples
                );
            }
            println!("wrote {}", artifact_path(&out, FILE_SWEEP).display());
        }
    }
    Ok(())
}

fn saf_csv(out: &std::path::Path) -> PathBuf {
    artifact_path(out, &format!("{FILE_SAF_STEM}.csv"))
}
