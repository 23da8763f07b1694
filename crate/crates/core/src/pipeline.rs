//! End-to-end orchestration: generate -> train -> evaluate, all rooted in
//! one experiment config. Artifacts land under the config's output
//! directory:
//!
//! ```text
//! out_dir/
//!   dataset/                 SEIR record files + manifest.txt
//!   models/                  cGAN + classifier checkpoints, resume state,
//!                            per-epoch training logs
//!   reports/                 per-(method, rate) CSVs + plotdata.csv
//! ```
//!
//! Every text artifact carries the config hash; binary checkpoints get a
//! small `.meta` sidecar with the same hash.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cgan::{
    build_generator, pair_training_tensors, CganError, CganTrainer, EpochLog, TrainedGenerator,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::dataset::{
    build_dataset, low_rate_file_name, read_records, DatasetError, DatasetSummary, PreambleRecord,
};
use crate::eval::{run_comparison, ComparisonData, EvalError, EvalReport, Method};
use crate::nn::{load_checkpoint, save_checkpoint, NnError};
use crate::seed::derive_seed;
use crate::tensorize::LabelEmbedder;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("output {0} already exists; pass --force to overwrite")]
    AlreadyExists(PathBuf),

    #[error("{0}")]
    MissingPrerequisite(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Cgan(#[from] CganError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Nn(#[from] NnError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Path layout of one experiment run.
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            root: cfg.out_dir.clone(),
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn cgan_checkpoint(&self, rate_hz: f64) -> PathBuf {
        self.models_dir()
            .join(format!("cgan_{}khz.seiw", (rate_hz / 1000.0).round() as u64))
    }

    pub fn cgan_state(&self, rate_hz: f64) -> PathBuf {
        self.models_dir()
            .join(format!("cgan_{}khz.seis", (rate_hz / 1000.0).round() as u64))
    }

    pub fn cgan_log(&self, rate_hz: f64) -> PathBuf {
        self.models_dir().join(format!(
            "cgan_{}khz_log.csv",
            (rate_hz / 1000.0).round() as u64
        ))
    }

    pub fn plotdata(&self) -> PathBuf {
        self.reports_dir().join("plotdata.csv")
    }
}

fn write_meta(path: &Path, cfg: &ExperimentConfig, stage: &str) -> Result<(), PipelineError> {
    let meta = format!("config_hash = {}\nstage = {stage}\n", cfg.hash());
    let meta_path = path.with_extension(format!(
        "{}.meta",
        path.extension().and_then(|e| e.to_str()).unwrap_or("bin")
    ));
    fs::write(&meta_path, meta).map_err(io_err(&meta_path))
}

/// Builds and persists the dataset. Refuses to overwrite an existing
/// dataset unless `force` is set.
pub fn generate(cfg: &ExperimentConfig, force: bool) -> Result<DatasetSummary, PipelineError> {
    let paths = RunPaths::new(cfg);
    let dir = paths.dataset_dir();
    if dir.join("manifest.txt").exists() && !force {
        return Err(PipelineError::AlreadyExists(dir));
    }
    let manifest = cfg.manifest();
    let extra = vec![("config_hash".to_string(), cfg.hash())];
    Ok(build_dataset(&manifest, &dir, &extra)?)
}

fn load_dataset_records(
    cfg: &ExperimentConfig,
    name: &str,
) -> Result<Vec<PreambleRecord>, PipelineError> {
    let paths = RunPaths::new(cfg);
    let path = paths.dataset_dir().join(name);
    if !path.exists() {
        return Err(PipelineError::MissingPrerequisite(format!(
            "dataset file {} not found; run: seilab generate --config <config>",
            path.display()
        )));
    }
    Ok(read_records(&path)?)
}

/// Outcome summary of one cGAN training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CganStageSummary {
    pub rate_hz: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub checkpoint: PathBuf,
}

/// Trains the cGAN for one collection rate, saving resume state per epoch.
/// An interrupted run picks up from the last completed epoch and reaches a
/// bit-identical final checkpoint.
pub fn train_cgan_stage(
    cfg: &ExperimentConfig,
    rate_hz: f64,
    force: bool,
) -> Result<CganStageSummary, PipelineError> {
    let paths = RunPaths::new(cfg);
    fs::create_dir_all(paths.models_dir()).map_err(io_err(&paths.models_dir()))?;

    let high = load_dataset_records(cfg, "train_high.seir")?;
    let low = load_dataset_records(cfg, &low_rate_file_name(rate_hz))?;
    let pairs = pair_training_tensors(&high, &low, rate_hz)?;

    let gan_cfg = cfg.cgan_config(rate_hz);
    let mut trainer = CganTrainer::new(&pairs, cfg.dataset.emitters, &gan_cfg)?;
    if cfg.augment.enabled {
        let clean = load_dataset_records(cfg, "clean.seir")?;
        trainer.enable_augment(&clean, (cfg.augment.snr_lo_db, cfg.augment.snr_hi_db))?;
    }

    let state_path = paths.cgan_state(rate_hz);
    if state_path.exists() {
        if force {
            fs::remove_file(&state_path).map_err(io_err(&state_path))?;
        } else {
            trainer.restore_state(&state_path)?;
        }
    }

    while !trainer.is_finished() {
        trainer.run_epoch()?;
        trainer.save_state(&state_path)?;
    }

    let log: Vec<EpochLog> = trainer.log().to_vec();
    let outcome = trainer.into_outcome();
    let checkpoint = paths.cgan_checkpoint(rate_hz);
    save_checkpoint(&outcome.generator.network, &checkpoint)?;
    write_meta(&checkpoint, cfg, "cgan")?;
    crate::cgan::write_training_log(
        &paths.cgan_log(rate_hz),
        &log,
        &[format!("config_hash = {}", cfg.hash())],
    )?;

    Ok(CganStageSummary {
        rate_hz,
        epochs_run: log.len(),
        stopped_early: outcome.stopped_early,
        checkpoint,
    })
}

/// Rebuilds the trained generator from its checkpoint. The conditioning
/// path is reconstructed from the config seed, exactly as during training.
pub fn load_generator(
    cfg: &ExperimentConfig,
    rate_hz: f64,
) -> Result<TrainedGenerator, PipelineError> {
    let paths = RunPaths::new(cfg);
    let checkpoint = paths.cgan_checkpoint(rate_hz);
    if !checkpoint.exists() {
        return Err(PipelineError::MissingPrerequisite(format!(
            "checkpoint {} not found; run: seilab train --config <config> --stage cgan --f-low {}",
            checkpoint.display(),
            rate_hz / 1e6
        )));
    }
    let gan_cfg = cfg.cgan_config(rate_hz);
    let mut network = build_generator(rate_hz, derive_seed(gan_cfg.seed, "generator", &[]))?;
    load_checkpoint(&mut network, &checkpoint)?;
    let embedder = LabelEmbedder::new(
        cfg.dataset.emitters,
        derive_seed(gan_cfg.seed, "embedder", &[]),
    );
    Ok(TrainedGenerator {
        network,
        low_rate_hz: rate_hz,
        embedder,
    })
}

/// Pre-trains every classifier the evaluation section needs, filling the
/// model cache.
pub fn train_classifier_stage(cfg: &ExperimentConfig) -> Result<usize, PipelineError> {
    let paths = RunPaths::new(cfg);
    fs::create_dir_all(paths.models_dir()).map_err(io_err(&paths.models_dir()))?;
    let data = load_comparison_records(cfg, false)?;
    let plan = cfg.comparison_plan(Some(paths.models_dir()))?;
    Ok(crate::eval::warm_classifiers(
        &data.as_comparison_data(Vec::new()),
        &plan,
    )?)
}

/// Owned record sets backing a ComparisonData.
pub struct LoadedRecords {
    pub train_high: Vec<PreambleRecord>,
    pub train_low: Vec<(f64, Vec<PreambleRecord>)>,
    pub test_high: Vec<PreambleRecord>,
    pub clean: Vec<PreambleRecord>,
}

impl LoadedRecords {
    pub fn as_comparison_data(
        &self,
        generators: Vec<(f64, TrainedGenerator)>,
    ) -> ComparisonData<'_> {
        ComparisonData {
            train_high: &self.train_high,
            train_low: self
                .train_low
                .iter()
                .map(|(r, v)| (*r, v.as_slice()))
                .collect(),
            test_high: &self.test_high,
            clean: &self.clean,
            generators,
        }
    }
}

fn load_comparison_records(
    cfg: &ExperimentConfig,
    _test_only: bool,
) -> Result<LoadedRecords, PipelineError> {
    let train_high = load_dataset_records(cfg, "train_high.seir")?;
    let test_high = load_dataset_records(cfg, "test_high.seir")?;
    let clean = load_dataset_records(cfg, "clean.seir")?;
    let mut train_low = Vec::new();
    if cfg.evaluation.methods.contains(&Method::CnnOnly) {
        for &rate in &cfg.evaluation.rates_hz {
            train_low.push((rate, load_dataset_records(cfg, &low_rate_file_name(rate))?));
        }
    }
    Ok(LoadedRecords {
        train_high,
        train_low,
        test_high,
        clean,
    })
}

/// Runs the comparison, writing one CSV per report plus the plotdata file.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>, PipelineError> {
    let paths = RunPaths::new(cfg);
    fs::create_dir_all(paths.models_dir()).map_err(io_err(&paths.models_dir()))?;
    fs::create_dir_all(paths.reports_dir()).map_err(io_err(&paths.reports_dir()))?;

    let mut generators = Vec::new();
    if cfg.evaluation.methods.contains(&Method::Cgan) {
        for &rate in &cfg.evaluation.rates_hz {
            if cfg.cgan.rates_hz.contains(&rate) {
                generators.push((rate, load_generator(cfg, rate)?));
            }
        }
    }

    let records = load_comparison_records(cfg, false)?;
    let plan = cfg.comparison_plan(Some(paths.models_dir()))?;

    // Rates with a cgan method but no trained generator fail inside
    // run_comparison with an actionable message; rates never configured for
    // cgan training are filtered out of that method up front.
    let data = records.as_comparison_data(generators);
    let mut effective_plan = plan;
    if !cfg
        .evaluation
        .rates_hz
        .iter()
        .all(|r| cfg.cgan.rates_hz.contains(r))
        && effective_plan.methods.contains(&Method::Cgan)
    {
        // Split evaluation: cgan only where a generator can exist.
        let cgan_rates: Vec<f64> = cfg
            .evaluation
            .rates_hz
            .iter()
            .copied()
            .filter(|r| cfg.cgan.rates_hz.contains(r))
            .collect();
        let other_methods: Vec<Method> = effective_plan
            .methods
            .iter()
            .copied()
            .filter(|m| *m != Method::Cgan)
            .collect();
        let mut reports = Vec::new();
        if !cgan_rates.is_empty() {
            let mut cgan_plan = effective_plan.clone();
            cgan_plan.methods = vec![Method::Cgan];
            cgan_plan.low_rates_hz = cgan_rates;
            reports.extend(run_comparison(&data, &cgan_plan)?);
        }
        effective_plan.methods = other_methods;
        reports.extend(run_comparison(&data, &effective_plan)?);
        return write_reports(cfg, reports);
    }

    let reports = run_comparison(&data, &effective_plan)?;
    write_reports(cfg, reports)
}

fn write_reports(
    cfg: &ExperimentConfig,
    reports: Vec<EvalReport>,
) -> Result<Vec<EvalReport>, PipelineError> {
    let paths = RunPaths::new(cfg);
    let header = vec![format!("config_hash = {}", cfg.hash())];
    for report in &reports {
        let path = paths
            .reports_dir()
            .join(crate::eval::report_file_name(report));
        crate::eval::write_report_csv(report, &path, &header)?;
    }
    crate::eval::write_plotdata(&reports, &paths.plotdata(), &header)?;
    Ok(reports)
}

/// Full chain for one config: generate, train every configured cGAN, then
/// evaluate. Returns the evaluation reports.
pub fn run_all(cfg: &ExperimentConfig, force: bool) -> Result<Vec<EvalReport>, PipelineError> {
    generate(cfg, force)?;
    for &rate in &cfg.cgan.rates_hz.clone() {
        if cfg.evaluation.methods.contains(&Method::Cgan) {
            train_cgan_stage(cfg, rate, force)?;
        }
    }
    evaluate(cfg)
}
