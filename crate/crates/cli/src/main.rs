//! `seilab` - experiment orchestration from one declarative config.
//!
//! Subcommands: `generate`, `resample`, `train`, `evaluate`,
//! `compare-spectro`. Exit codes: 0 success, 2 config error, 3 missing
//! prerequisite, 4 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seilab::cgan::width_for_rate;
use seilab::config::{parse_config, ConfigError, ExperimentConfig};
use seilab::dataset::{read_records, write_records, PreambleRecord};
use seilab::eval::{EvalError, Method};
use seilab::filter::decimate;
use seilab::nn::NnError;
use seilab::pipeline::{self, PipelineError, RunPaths};
use seilab::resample::{csi_upsample, lai_upsample};
use seilab::spectro::{channel_independent_spectrogram, spectro_width, SpectroConfig};

#[derive(Parser)]
#[command(name = "seilab", version, about = "Specific-emitter-identification upsampling laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset described by the config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Upsample the records of a SEIR file with a classical interpolator.
    Resample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// lai or csi
        #[arg(long)]
        method: String,
        /// Rate multiplier V.
        #[arg(long)]
        factor: usize,
    },
    /// Train the cGAN (per collection rate) or pre-train the classifiers.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// cgan or classifier
        #[arg(long)]
        stage: String,
        /// Collection rate in MHz (cgan stage); omitted = every configured rate.
        #[arg(long = "f-low")]
        f_low: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restart training instead of resuming saved state.
        #[arg(long)]
        force: bool,
        /// Online noise augmentation during training.
        #[arg(long)]
        augment: bool,
    },
    /// Run the method comparison and write report CSVs plus plot data.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to one collection rate (MHz).
        #[arg(long = "f-low")]
        f_low: Option<f64>,
        /// Restrict to one method.
        #[arg(long)]
        method: Option<String>,
        /// Online noise augmentation for classifier training.
        #[arg(long)]
        augment: bool,
    },
    /// Spectrogram sizing table and CSV matrices for the comparison track.
    CompareSpectro {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to one collection rate (MHz).
        #[arg(long = "f-low")]
        f_low: Option<f64>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    MissingPrerequisite(String),
    Numeric(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingPrerequisite(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::MissingPrerequisite(m)
            | CliError::Numeric(m)
            | CliError::Other(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => CliError::Config(c.to_string()),
            PipelineError::MissingPrerequisite(m) => CliError::MissingPrerequisite(m),
            PipelineError::AlreadyExists(_) => CliError::Other(e.to_string()),
            PipelineError::Eval(EvalError::MissingGenerator { .. }) => {
                CliError::MissingPrerequisite(e.to_string())
            }
            PipelineError::Nn(NnError::NonFinite { .. })
            | PipelineError::Eval(EvalError::Nn(NnError::NonFinite { .. })) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    augment: bool,
) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if augment {
        cfg.augment.enabled = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_generate(config: &Path, seed: Option<u64>, force: bool) -> Result<(), CliError> {
    let cfg = load_config(config, seed, false)?;
    let summary = pipeline::generate(&cfg, force)?;
    let paths = RunPaths::new(&cfg);
    println!("dataset written to {}", paths.dataset_dir().display());
    println!("config hash: {}", cfg.hash());
    println!(
        "base preambles: {} ({} emitters x {})",
        summary.base_preambles,
        cfg.dataset.emitters,
        cfg.dataset.per_emitter_count
    );
    println!(
        "per (emitter, SNR, realization): {} train + {} test",
        cfg.dataset.train_count,
        cfg.dataset.per_emitter_count - cfg.dataset.train_count
    );
    println!(
        "noisy records: {} train, {} test over {} SNRs x {} realizations",
        summary.train_records,
        summary.test_records,
        cfg.dataset.snr_grid_db.len(),
        cfg.dataset.realizations
    );
    println!("decimated training copies: {}", summary.low_rate_files);
    Ok(())
}

fn cmd_resample(
    input: &Path,
    output: &Path,
    method: &str,
    factor: usize,
) -> Result<(), CliError> {
    let records = read_records(input).map_err(|e| CliError::Other(e.to_string()))?;
    let upsample = match method {
        "lai" => lai_upsample,
        "csi" => csi_upsample,
        other => {
            return Err(CliError::Config(format!(
                "unknown method '{other}' (expected lai or csi)"
            )))
        }
    };
    let out: Vec<PreambleRecord> = records
        .iter()
        .map(|r| {
            upsample(&r.sequence, factor).map(|sequence| PreambleRecord {
                sequence,
                ..r.clone()
            })
        })
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Other(e.to_string()))?;
    write_records(output, &out).map_err(|e| CliError::Other(e.to_string()))?;
    println!(
        "{} records upsampled x{factor} with {method}: {} -> {}",
        out.len(),
        input.display(),
        output.display()
    );
    Ok(())
}

fn cmd_train(
    config: &Path,
    stage: &str,
    f_low_mhz: Option<f64>,
    seed: Option<u64>,
    force: bool,
    augment: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed, augment)?;
    match stage {
        "cgan" => {
            let rates: Vec<f64> = match f_low_mhz {
                Some(mhz) => vec![mhz * 1e6],
                None => cfg.cgan.rates_hz.clone(),
            };
            for rate in rates {
                if !cfg.cgan.rates_hz.contains(&rate) {
                    return Err(CliError::Config(format!(
                        "rate {} MHz is not in [cgan] rates_mhz",
                        rate / 1e6
                    )));
                }
                let summary = pipeline::train_cgan_stage(&cfg, rate, force)?;
                println!(
                    "cgan @ {} MHz: {} epochs{}, checkpoint {}",
                    rate / 1e6,
                    summary.epochs_run,
                    if summary.stopped_early {
                        " (equilibrium stop)"
                    } else {
                        ""
                    },
                    summary.checkpoint.display()
                );
            }
            Ok(())
        }
        "classifier" => {
            let count = pipeline::train_classifier_stage(&cfg)?;
            println!("{count} classifiers ready in the model cache");
            Ok(())
        }
        other => Err(CliError::Config(format!(
            "unknown stage '{other}' (expected cgan or classifier)"
        ))),
    }
}

fn cmd_evaluate(
    config: &Path,
    seed: Option<u64>,
    f_low_mhz: Option<f64>,
    method: Option<&str>,
    augment: bool,
) -> Result<(), CliError> {
    let mut cfg = load_config(config, seed, augment)?;
    if let Some(mhz) = f_low_mhz {
        let rate = mhz * 1e6;
        if !cfg.evaluation.rates_hz.contains(&rate) {
            return Err(CliError::Config(format!(
                "rate {mhz} MHz is not in [evaluation] rates_mhz"
            )));
        }
        cfg.evaluation.rates_hz = vec![rate];
    }
    if let Some(name) = method {
        let m = Method::parse(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown method '{name}' (expected full_rate, cgan, cnn_only, lai, csi)"
            ))
        })?;
        cfg.evaluation.methods = vec![m];
    }
    let reports = pipeline::evaluate(&cfg)?;
    let paths = RunPaths::new(&cfg);
    println!("reports written to {}", paths.reports_dir().display());
    for report in &reports {
        let name = if report.method == Method::FullRate {
            "full_rate (20 MHz)".to_string()
        } else {
            format!("{} @ {} MHz", report.method.as_str(), report.low_rate_hz / 1e6)
        };
        let mean = report
            .mean_over_snr_pct()
            .map(|v| format!("{v:.1}%"))
            .unwrap_or_else(|| "missing".into());
        println!("  {name}: mean accuracy over SNR {mean}");
    }
    Ok(())
}

fn cmd_compare_spectro(
    config: &Path,
    seed: Option<u64>,
    f_low_mhz: Option<f64>,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed, false)?;
    let paths = RunPaths::new(&cfg);
    let test = read_records(&paths.dataset_dir().join("test_high.seir")).map_err(|_| {
        CliError::MissingPrerequisite(
            "dataset not found; run: seilab generate --config <config>".into(),
        )
    })?;
    let out_dir = paths.reports_dir().join("spectro");
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Other(e.to_string()))?;

    let mut rates = vec![seilab::signal::HIGH_RATE_HZ];
    rates.extend(cfg.evaluation.rates_hz.iter().copied());
    if let Some(mhz) = f_low_mhz {
        rates = vec![mhz * 1e6];
    }

    println!("rate_mhz  window  hop  SF  M  width(M-1)");
    for rate in rates {
        let factor = (seilab::signal::HIGH_RATE_HZ / rate).round() as usize;
        let width = width_for_rate(rate).map_err(|e| CliError::Config(e.to_string()))?;
        // The sizing rule needs a bandwidth; match it to the preamble
        // duration so M reflects the records actually on disk.
        let mut sc = SpectroConfig::for_wifi_rate(rate);
        sc.bandwidth_hz = 8.0 * f64::from(2u32.pow(sc.spreading_factor)) * rate / width as f64;
        match spectro_width(&sc) {
            Ok(m) if m >= 2 => {
                println!(
                    "{:8}  {:6}  {:3}  {:2}  {m}  {}",
                    rate / 1e6,
                    sc.window_len,
                    sc.hop,
                    sc.spreading_factor,
                    m - 1
                );
                // Export the first record's spectrogram for inspection.
                if let Some(rec) = test.first() {
                    let seq = if factor > 1 {
                        decimate(&rec.sequence, factor).map_err(|e| CliError::Other(e.to_string()))?
                    } else {
                        rec.sequence.clone()
                    };
                    let s = channel_independent_spectrogram(&seq, &sc)
                        .map_err(|e| CliError::Numeric(e.to_string()))?;
                    let mut csv = String::new();
                    for row in 0..s.rows {
                        let line: Vec<String> = (0..s.cols)
                            .map(|c| format!("{:.6}", s.at(row, c)))
                            .collect();
                        csv.push_str(&line.join(","));
                        csv.push('\n');
                    }
                    let path = out_dir.join(format!("spectro_{}khz.csv", (rate / 1e3) as u64));
                    std::fs::write(&path, csv).map_err(|e| CliError::Other(e.to_string()))?;
                }
            }
            Ok(_) | Err(_) => {
                println!(
                    "{:8}  {:6}  {:3}  {:2}  rejected: preamble shorter than one window",
                    rate / 1e6,
                    sc.window_len,
                    sc.hop,
                    sc.spreading_factor
                );
            }
        }
    }
    println!("spectrogram matrices in {}", out_dir.display());
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate {
            config,
            seed,
            force,
        } => cmd_generate(config, *seed, *force),
        Command::Resample {
            input,
            output,
            method,
            factor,
        } => cmd_resample(input, output, method, *factor),
        Command::Train {
            config,
            stage,
            f_low,
            seed,
            force,
            augment,
        } => cmd_train(config, stage, *f_low, *seed, *force, *augment),
        Command::Evaluate {
            config,
            seed,
            f_low,
            method,
            augment,
        } => cmd_evaluate(config, *seed, *f_low, method.as_deref(), *augment),
        Command::CompareSpectro {
            config,
            seed,
            f_low,
        } => cmd_compare_spectro(config, *seed, *f_low),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
