//! Experiment configuration: a sectioned key=value text format.
//!
//! The whole generate -> train -> evaluate chain is a pure function of one
//! config file. Every artifact embeds the config hash, computed over the
//! canonical serialization with the output directory excluded, so the same
//! experiment hashes identically wherever it runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cgan::CganConfig;
use crate::dataset::DatasetManifest;
use crate::eval::{ClassifierConfig, ComparisonPlan, EvalError, Method, TrainSnrMap};
use crate::impairment::{scaled_fleet, FleetScales};
use crate::nn::AdamHyper;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required key [{section}] {key}")]
    MissingKey {
        section: &'static str,
        key: &'static str,
    },

    #[error("[{section}] {key} (line {line}): {message}")]
    BadValue {
        section: String,
        key: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSection {
    pub emitters: usize,
    pub fleet_spread: f64,
    pub cfo_scale: f64,
    pub iq_gain_scale: f64,
    pub iq_phase_scale: f64,
    pub pa_scale: f64,
    pub phase_noise_scale: f64,
    pub per_emitter_count: usize,
    pub train_count: usize,
    pub realizations: u16,
    pub snr_grid_db: Vec<f64>,
    pub low_rates_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CganSection {
    pub rates_hz: Vec<f64>,
    pub epochs: usize,
    pub minibatch: usize,
    pub k_discriminator_steps: usize,
    pub equilibrium_eps: f64,
    pub pair_cap: Option<usize>,
    pub aux_l1_weight: f64,
    pub instance_noise_std: f64,
    pub instance_noise_floor: f64,
    pub d_learning_rate: f64,
    pub g_learning_rate: f64,
    pub g_momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSection {
    pub epochs: usize,
    pub patience: usize,
    pub holdout_fraction: f64,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub train_cap: Option<usize>,
    pub train_snr_map: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSection {
    pub methods: Vec<Method>,
    pub rates_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSection {
    pub enabled: bool,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub cgan: CganSection,
    pub classifier: ClassifierSection,
    pub evaluation: EvaluationSection,
    pub augment: AugmentSection,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale run: the pinned directional experiment. About 15 minutes
    /// of single-core compute end to end.
    pub fn desk(seed: u64) -> Self {
        Self {
            dataset: DatasetSection {
                emitters: 4,
                fleet_spread: 1.0,
                cfo_scale: 1.0,
                iq_gain_scale: 1.0,
                iq_phase_scale: 1.0,
                pa_scale: 1.0,
                phase_noise_scale: 1.0,
                per_emitter_count: 200,
                train_count: 160,
                realizations: 2,
                snr_grid_db: vec![9.0, 15.0, 21.0, 27.0],
                low_rates_hz: vec![2.5e6, 5e6],
            },
            cgan: CganSection {
                rates_hz: vec![5e6],
                epochs: 100,
                minibatch: 128,
                k_discriminator_steps: 1,
                equilibrium_eps: 0.02,
                pair_cap: Some(1024),
                aux_l1_weight: 0.0,
                instance_noise_std: 0.2,
                instance_noise_floor: 0.05,
                d_learning_rate: 5e-5,
                g_learning_rate: 2e-2,
                g_momentum: 0.9,
            },
            classifier: ClassifierSection {
                epochs: 25,
                patience: 8,
                holdout_fraction: 0.1,
                minibatch: 64,
                learning_rate: 1e-3,
                l2: 1e-4,
                train_cap: Some(512),
                train_snr_map: crate::dataset::default_train_snr_pairs(),
            },
            evaluation: EvaluationSection {
                methods: vec![
                    Method::FullRate,
                    Method::Cgan,
                    Method::CnnOnly,
                    Method::Lai,
                    Method::Csi,
                ],
                rates_hz: vec![2.5e6, 5e6],
            },
            augment: AugmentSection {
                enabled: false,
                snr_lo_db: 9.0,
                snr_hi_db: 30.0,
            },
            seed,
            out_dir: PathBuf::from("runs/desk"),
        }
    }

    /// Two-emitter continuous-integration preset (small and fast).
    pub fn ci(seed: u64) -> Self {
        let mut cfg = Self::desk(seed);
        cfg.dataset.emitters = 2;
        cfg.dataset.realizations = 1;
        cfg.dataset.snr_grid_db = vec![9.0, 21.0];
        cfg.dataset.low_rates_hz = vec![5e6];
        cfg.classifier.train_snr_map = vec![(9.0, 9.0), (21.0, 9.0)];
        cfg.cgan.epochs = 50;
        cfg.cgan.minibatch = 64;
        cfg.cgan.pair_cap = Some(256);
        cfg.classifier.epochs = 10;
        cfg.classifier.train_cap = Some(256);
        cfg.evaluation.rates_hz = vec![5e6];
        cfg.out_dir = PathBuf::from("runs/ci");
        cfg
    }

    /// The full-scale layout: 2,000 preambles per radio, 10 noise
    /// realizations, the complete SNR grid, 1,000-epoch cGAN training.
    pub fn full(seed: u64) -> Self {
        let mut cfg = Self::desk(seed);
        cfg.dataset.per_emitter_count = 2000;
        cfg.dataset.train_count = 1600;
        cfg.dataset.realizations = 10;
        cfg.dataset.snr_grid_db = crate::dataset::default_snr_grid();
        cfg.dataset.low_rates_hz = vec![2.5e6, 5e6, 10e6];
        cfg.cgan.rates_hz = vec![2.5e6, 5e6, 10e6];
        cfg.cgan.epochs = 1000;
        cfg.cgan.minibatch = 256;
        cfg.cgan.pair_cap = None;
        cfg.classifier.epochs = 200;
        cfg.classifier.patience = 20;
        cfg.classifier.train_cap = None;
        cfg.evaluation.rates_hz = vec![2.5e6, 5e6, 10e6];
        cfg.out_dir = PathBuf::from("runs/full");
        cfg
    }

    pub fn manifest(&self) -> DatasetManifest {
        let scales = FleetScales {
            spread: self.dataset.fleet_spread,
            cfo: self.dataset.cfo_scale,
            iq_gain: self.dataset.iq_gain_scale,
            iq_phase: self.dataset.iq_phase_scale,
            pa: self.dataset.pa_scale,
            phase_noise: self.dataset.phase_noise_scale,
        };
        let fleet = scaled_fleet(scales)
            .into_iter()
            .take(self.dataset.emitters)
            .collect();
        DatasetManifest {
            fleet,
            per_emitter_count: self.dataset.per_emitter_count,
            train_count_per_realization: self.dataset.train_count,
            snr_grid_db: self.dataset.snr_grid_db.clone(),
            realizations: self.dataset.realizations,
            low_rates_hz: self.dataset.low_rates_hz.clone(),
            seed: self.seed,
        }
    }

    pub fn cgan_config(&self, rate_hz: f64) -> CganConfig {
        CganConfig {
            low_rate_hz: rate_hz,
            minibatch: self.cgan.minibatch,
            epochs: self.cgan.epochs,
            k_discriminator_steps: self.cgan.k_discriminator_steps,
            equilibrium_eps: self.cgan.equilibrium_eps,
            seed: crate::seed::derive_seed(self.seed, "cgan", &[rate_hz as u64]),
            d_learning_rate: self.cgan.d_learning_rate,
            g_learning_rate: self.cgan.g_learning_rate,
            g_momentum: self.cgan.g_momentum,
            aux_l1_weight: self.cgan.aux_l1_weight,
            non_saturating_g_loss: true,
            instance_noise_std: self.cgan.instance_noise_std,
            instance_noise_floor: self.cgan.instance_noise_floor,
            pair_cap: self.cgan.pair_cap,
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            num_classes: self.dataset.emitters,
            epochs: self.classifier.epochs,
            patience: self.classifier.patience,
            holdout_fraction: self.classifier.holdout_fraction,
            minibatch: self.classifier.minibatch,
            adam: AdamHyper {
                lr: self.classifier.learning_rate,
                l2: self.classifier.l2,
                ..Default::default()
            },
            train_cap: self.classifier.train_cap,
            seed: self.seed,
        }
    }

    pub fn comparison_plan(
        &self,
        classifier_cache_dir: Option<PathBuf>,
    ) -> Result<ComparisonPlan, ConfigError> {
        Ok(ComparisonPlan {
            methods: self.evaluation.methods.clone(),
            low_rates_hz: self.evaluation.rates_hz.clone(),
            snr_map: TrainSnrMap::new(self.classifier.train_snr_map.clone())?,
            classifier: self.classifier_config(),
            augment_snr_range_db: self
                .augment
                .enabled
                .then_some((self.augment.snr_lo_db, self.augment.snr_hi_db)),
            classifier_cache_dir,
        })
    }

    /// Canonical serialization; `include_out_dir = false` is the hashing
    /// form.
    pub fn to_text(&self, include_out_dir: bool) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_mhz = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{}", x / 1e6))
                .collect::<Vec<_>>()
                .join(",")
        };
        let opt = |v: Option<usize>| match v {
            Some(x) => format!("{x}"),
            None => "none".into(),
        };
        let mut s = String::new();
        s.push_str("[dataset]\n");
        s.push_str(&format!("emitters = {}\n", self.dataset.emitters));
        s.push_str(&format!("fleet_spread = {}\n", self.dataset.fleet_spread));
        s.push_str(&format!("cfo_scale = {}\n", self.dataset.cfo_scale));
        s.push_str(&format!("iq_gain_scale = {}\n", self.dataset.iq_gain_scale));
        s.push_str(&format!(
            "iq_phase_scale = {}\n",
            self.dataset.iq_phase_scale
        ));
        s.push_str(&format!("pa_scale = {}\n", self.dataset.pa_scale));
        s.push_str(&format!(
            "phase_noise_scale = {}\n",
            self.dataset.phase_noise_scale
        ));
        s.push_str(&format!(
            "per_emitter_count = {}\n",
            self.dataset.per_emitter_count
        ));
        s.push_str(&format!("train_count = {}\n", self.dataset.train_count));
        s.push_str(&format!("realizations = {}\n", self.dataset.realizations));
        s.push_str(&format!(
            "snr_grid_db = {}\n",
            join(&self.dataset.snr_grid_db)
        ));
        s.push_str(&format!(
            "low_rates_mhz = {}\n",
            join_mhz(&self.dataset.low_rates_hz)
        ));
        s.push_str("\n[cgan]\n");
        s.push_str(&format!("rates_mhz = {}\n", join_mhz(&self.cgan.rates_hz)));
        s.push_str(&format!("epochs = {}\n", self.cgan.epochs));
        s.push_str(&format!("minibatch = {}\n", self.cgan.minibatch));
        s.push_str(&format!("k = {}\n", self.cgan.k_discriminator_steps));
        s.push_str(&format!(
            "equilibrium_eps = {}\n",
            self.cgan.equilibrium_eps
        ));
        s.push_str(&format!("pair_cap = {}\n", opt(self.cgan.pair_cap)));
        s.push_str(&format!("aux_l1_weight = {}\n", self.cgan.aux_l1_weight));
        s.push_str(&format!(
            "instance_noise_std = {}\n",
            self.cgan.instance_noise_std
        ));
        s.push_str(&format!(
            "instance_noise_floor = {}\n",
            self.cgan.instance_noise_floor
        ));
        s.push_str(&format!(
            "d_learning_rate = {}\n",
            self.cgan.d_learning_rate
        ));
        s.push_str(&format!(
            "g_learning_rate = {}\n",
            self.cgan.g_learning_rate
        ));
        s.push_str(&format!("g_momentum = {}\n", self.cgan.g_momentum));
        s.push_str("\n[classifier]\n");
        s.push_str(&format!("epochs = {}\n", self.classifier.epochs));
        s.push_str(&format!("patience = {}\n", self.classifier.patience));
        s.push_str(&format!(
            "holdout_fraction = {}\n",
            self.classifier.holdout_fraction
        ));
        s.push_str(&format!("minibatch = {}\n", self.classifier.minibatch));
        s.push_str(&format!(
            "learning_rate = {}\n",
            self.classifier.learning_rate
        ));
        s.push_str(&format!("l2 = {}\n", self.classifier.l2));
        s.push_str(&format!("train_cap = {}\n", opt(self.classifier.train_cap)));
        s.push_str(&format!(
            "train_snr_map = {}\n",
            self.classifier
                .train_snr_map
                .iter()
                .map(|(t, tr)| format!("{t}:{tr}"))
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str("\n[evaluation]\n");
        s.push_str(&format!(
            "methods = {}\n",
            self.evaluation
                .methods
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!(
            "rates_mhz = {}\n",
            join_mhz(&self.evaluation.rates_hz)
        ));
        s.push_str("\n[augment]\n");
        s.push_str(&format!("enabled = {}\n", self.augment.enabled));
        s.push_str(&format!("snr_lo_db = {}\n", self.augment.snr_lo_db));
        s.push_str(&format!("snr_hi_db = {}\n", self.augment.snr_hi_db));
        s.push_str("\n[global]\n");
        s.push_str(&format!("seed = {}\n", self.seed));
        if include_out_dir {
            s.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        }
        s
    }

    /// Cross-section consistency: every configured rate must exist in the
    /// dataset, and every test SNR must map to a train SNR the dataset
    /// actually contains.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let complain = |message: String| ConfigError::BadValue {
            section: "config".into(),
            key: "consistency".into(),
            line: 0,
            message,
        };
        if self.dataset.emitters == 0 || self.dataset.emitters > 4 {
            return Err(complain(format!(
                "emitters must be 1..=4 (the default fleet has 4 profiles), got {}",
                self.dataset.emitters
            )));
        }
        for &rate in self.evaluation.rates_hz.iter().chain(&self.cgan.rates_hz) {
            if !self.dataset.low_rates_hz.contains(&rate) {
                return Err(complain(format!(
                    "rate {} MHz is not in [dataset] low_rates_mhz",
                    rate / 1e6
                )));
            }
        }
        let map = TrainSnrMap::new(self.classifier.train_snr_map.clone())?;
        for &snr in &self.dataset.snr_grid_db {
            let train = map.train_for(snr)?;
            if !self
                .dataset
                .snr_grid_db
                .iter()
                .any(|&s| (s - train).abs() < 1e-9)
            {
                return Err(complain(format!(
                    "train SNR {train} dB (mapped from test {snr} dB) is not in snr_grid_db"
                )));
            }
        }
        Ok(())
    }

    /// Hex digest over the canonical form (out_dir excluded), so reports
    /// from the same experiment are traceable to the same hash.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text(false).as_bytes());
        let mut hex = String::with_capacity(16);
        for b in digest.iter().take(8) {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

struct RawConfig {
    entries: BTreeMap<(String, String), (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            if section.is_empty() {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "key outside any [section]".into(),
                });
            }
            let key = key.trim().to_string();
            if entries
                .insert(
                    (section.clone(), key.clone()),
                    (line_no, value.trim().to_string()),
                )
                .is_some()
            {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}' in section [{section}]"),
                });
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(((section, key), (line, _))) = self.entries.into_iter().next() {
            return Err(ConfigError::Parse {
                line,
                message: format!("unknown key '{key}' in section [{section}]"),
            });
        }
        Ok(())
    }
}

fn bad(section: &str, key: &str, line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        section: section.into(),
        key: key.into(),
        line,
        message: message.into(),
    }
}

fn parse_scalar<T: std::str::FromStr>(
    raw: &mut RawConfig,
    section: &str,
    key: &str,
    default: Option<T>,
) -> Result<T, ConfigError> {
    match raw.take(section, key) {
        Some((line, value)) => value
            .parse::<T>()
            .map_err(|_| bad(section, key, line, format!("cannot parse '{value}'"))),
        None => default.ok_or(ConfigError::MissingKey {
            section: Box::leak(section.to_string().into_boxed_str()),
            key: Box::leak(key.to_string().into_boxed_str()),
        }),
    }
}

fn parse_list_f64(
    raw: &mut RawConfig,
    section: &str,
    key: &str,
    default: Vec<f64>,
) -> Result<Vec<f64>, ConfigError> {
    match raw.take(section, key) {
        Some((line, value)) => value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(section, key, line, format!("cannot parse '{s}'")))
            })
            .collect(),
        None => Ok(default),
    }
}

fn parse_opt_usize(
    raw: &mut RawConfig,
    section: &str,
    key: &str,
    default: Option<usize>,
) -> Result<Option<usize>, ConfigError> {
    match raw.take(section, key) {
        Some((_, value)) if value == "none" => Ok(None),
        Some((line, value)) => value
            .parse::<usize>()
            .map(Some)
            .map_err(|_| bad(section, key, line, format!("cannot parse '{value}'"))),
        None => Ok(default),
    }
}

/// Parses a config file. Every value has a default from the desk preset
/// except the seed, which must be stated explicitly.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;
    let defaults = ExperimentConfig::desk(0);

    let seed = match raw.take("global", "seed") {
        Some((line, value)) => value
            .parse::<u64>()
            .map_err(|_| bad("global", "seed", line, format!("cannot parse '{value}'")))?,
        None => {
            return Err(ConfigError::MissingKey {
                section: "global",
                key: "seed",
            })
        }
    };
    let out_dir = match raw.take("global", "out_dir") {
        Some((_, value)) => PathBuf::from(value),
        None => defaults.out_dir.clone(),
    };

    let dataset = DatasetSection {
        emitters: parse_scalar(&mut raw, "dataset", "emitters", Some(4))?,
        fleet_spread: parse_scalar(&mut raw, "dataset", "fleet_spread", Some(1.0))?,
        cfo_scale: parse_scalar(&mut raw, "dataset", "cfo_scale", Some(1.0))?,
        iq_gain_scale: parse_scalar(&mut raw, "dataset", "iq_gain_scale", Some(1.0))?,
        iq_phase_scale: parse_scalar(&mut raw, "dataset", "iq_phase_scale", Some(1.0))?,
        pa_scale: parse_scalar(&mut raw, "dataset", "pa_scale", Some(1.0))?,
        phase_noise_scale: parse_scalar(&mut raw, "dataset", "phase_noise_scale", Some(1.0))?,
        per_emitter_count: parse_scalar(
            &mut raw,
            "dataset",
            "per_emitter_count",
            Some(defaults.dataset.per_emitter_count),
        )?,
        train_count: parse_scalar(
            &mut raw,
            "dataset",
            "train_count",
            Some(defaults.dataset.train_count),
        )?,
        realizations: parse_scalar(
            &mut raw,
            "dataset",
            "realizations",
            Some(defaults.dataset.realizations),
        )?,
        snr_grid_db: parse_list_f64(
            &mut raw,
            "dataset",
            "snr_grid_db",
            defaults.dataset.snr_grid_db.clone(),
        )?,
        low_rates_hz: parse_list_f64(
            &mut raw,
            "dataset",
            "low_rates_mhz",
            defaults
                .dataset
                .low_rates_hz
                .iter()
                .map(|r| r / 1e6)
                .collect(),
        )?
        .into_iter()
        .map(|mhz| mhz * 1e6)
        .collect(),
    };

    let cgan = CganSection {
        rates_hz: parse_list_f64(
            &mut raw,
            "cgan",
            "rates_mhz",
            defaults.cgan.rates_hz.iter().map(|r| r / 1e6).collect(),
        )?
        .into_iter()
        .map(|mhz| mhz * 1e6)
        .collect(),
        epochs: parse_scalar(&mut raw, "cgan", "epochs", Some(defaults.cgan.epochs))?,
        minibatch: parse_scalar(&mut raw, "cgan", "minibatch", Some(defaults.cgan.minibatch))?,
        k_discriminator_steps: parse_scalar(&mut raw, "cgan", "k", Some(1))?,
        equilibrium_eps: parse_scalar(&mut raw, "cgan", "equilibrium_eps", Some(0.02))?,
        pair_cap: parse_opt_usize(&mut raw, "cgan", "pair_cap", defaults.cgan.pair_cap)?,
        aux_l1_weight: parse_scalar(&mut raw, "cgan", "aux_l1_weight", Some(0.0))?,
        instance_noise_std: parse_scalar(
            &mut raw,
            "cgan",
            "instance_noise_std",
            Some(defaults.cgan.instance_noise_std),
        )?,
        instance_noise_floor: parse_scalar(
            &mut raw,
            "cgan",
            "instance_noise_floor",
            Some(defaults.cgan.instance_noise_floor),
        )?,
        d_learning_rate: parse_scalar(
            &mut raw,
            "cgan",
            "d_learning_rate",
            Some(defaults.cgan.d_learning_rate),
        )?,
        g_learning_rate: parse_scalar(
            &mut raw,
            "cgan",
            "g_learning_rate",
            Some(defaults.cgan.g_learning_rate),
        )?,
        g_momentum: parse_scalar(&mut raw, "cgan", "g_momentum", Some(0.9))?,
    };

    let train_snr_map = match raw.take("classifier", "train_snr_map") {
        Some((line, value)) => value
            .split(',')
            .map(|pair| {
                let (test, train) = pair.trim().split_once(':').ok_or_else(|| {
                    bad(
                        "classifier",
                        "train_snr_map",
                        line,
                        format!("expected 'test:train', got '{pair}'"),
                    )
                })?;
                let parse = |s: &str| {
                    s.trim().parse::<f64>().map_err(|_| {
                        bad(
                            "classifier",
                            "train_snr_map",
                            line,
                            format!("cannot parse '{s}'"),
                        )
                    })
                };
                Ok((parse(test)?, parse(train)?))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?,
        None => defaults.classifier.train_snr_map.clone(),
    };

    let classifier = ClassifierSection {
        epochs: parse_scalar(
            &mut raw,
            "classifier",
            "epochs",
            Some(defaults.classifier.epochs),
        )?,
        patience: parse_scalar(
            &mut raw,
            "classifier",
            "patience",
            Some(defaults.classifier.patience),
        )?,
        holdout_fraction: parse_scalar(&mut raw, "classifier", "holdout_fraction", Some(0.1))?,
        minibatch: parse_scalar(
            &mut raw,
            "classifier",
            "minibatch",
            Some(defaults.classifier.minibatch),
        )?,
        learning_rate: parse_scalar(&mut raw, "classifier", "learning_rate", Some(1e-3))?,
        l2: parse_scalar(&mut raw, "classifier", "l2", Some(1e-4))?,
        train_cap: parse_opt_usize(
            &mut raw,
            "classifier",
            "train_cap",
            defaults.classifier.train_cap,
        )?,
        train_snr_map,
    };

    let methods = match raw.take("evaluation", "methods") {
        Some((line, value)) => value
            .split(',')
            .map(|s| {
                let s = s.trim();
                Method::parse(s).ok_or_else(|| {
                    bad(
                        "evaluation",
                        "methods",
                        line,
                        format!(
                            "unknown method '{s}' (expected full_rate, cgan, cnn_only, lai, csi)"
                        ),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.evaluation.methods.clone(),
    };
    let evaluation = EvaluationSection {
        methods,
        rates_hz: parse_list_f64(
            &mut raw,
            "evaluation",
            "rates_mhz",
            defaults
                .evaluation
                .rates_hz
                .iter()
                .map(|r| r / 1e6)
                .collect(),
        )?
        .into_iter()
        .map(|mhz| mhz * 1e6)
        .collect(),
    };

    let augment = AugmentSection {
        enabled: parse_scalar(&mut raw, "augment", "enabled", Some(false))?,
        snr_lo_db: parse_scalar(&mut raw, "augment", "snr_lo_db", Some(9.0))?,
        snr_hi_db: parse_scalar(&mut raw, "augment", "snr_hi_db", Some(30.0))?,
    };

    raw.finish()?;
    let cfg = ExperimentConfig {
        dataset,
        cgan,
        classifier,
        evaluation,
        augment,
        seed,
        out_dir,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_through_the_parser() {
        for cfg in [
            ExperimentConfig::desk(20260809),
            ExperimentConfig::ci(7),
            ExperimentConfig::full(99),
        ] {
            cfg.validate().unwrap();
            let text = cfg.to_text(true);
            let parsed = parse_config(&text).unwrap();
            assert_eq!(parsed, cfg);
        }
    }

    #[test]
    fn shipped_preset_files_match_the_code_presets() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for (name, preset) in [
            ("desk.conf", ExperimentConfig::desk(20260809)),
            ("ci.conf", ExperimentConfig::ci(20260809)),
            ("full.conf", ExperimentConfig::full(20260809)),
        ] {
            let text = std::fs::read_to_string(root.join(name)).unwrap();
            let parsed = parse_config(&text).unwrap();
            assert_eq!(parsed, preset, "configs/{name} drifted from the preset");
        }
    }

    #[test]
    fn inconsistent_snr_map_is_rejected() {
        let mut cfg = ExperimentConfig::desk(1);
        cfg.dataset.snr_grid_db = vec![18.0]; // maps to train 12, not in grid
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("snr_grid_db"), "{err}");
    }

    #[test]
    fn missing_seed_is_refused_by_name() {
        let err = parse_config("[dataset]\nemitters = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("seed"), "{msg}");
    }

    #[test]
    fn unknown_key_reports_line_and_section() {
        let text = "[global]\nseed = 1\n[dataset]\nbogus = 3\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn bad_value_reports_key_and_line() {
        let text = "[global]\nseed = 1\n[cgan]\nepochs = many\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epochs") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = "[global]\nseed = 1\nseed = 2\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn full_preset_spans_thirteen_reports() {
        // full_rate plus {cgan, cnn_only, lai, csi} x {2.5, 5, 10} MHz.
        let cfg = ExperimentConfig::full(0);
        let per_rate = cfg
            .evaluation
            .methods
            .iter()
            .filter(|m| **m != Method::FullRate)
            .count();
        let full = usize::from(cfg.evaluation.methods.contains(&Method::FullRate));
        assert_eq!(full + per_rate * cfg.evaluation.rates_hz.len(), 13);
    }

    #[test]
    fn hash_ignores_out_dir_but_tracks_seed() {
        let mut a = ExperimentConfig::desk(1);
        let mut b = ExperimentConfig::desk(1);
        a.out_dir = PathBuf::from("/tmp/x");
        b.out_dir = PathBuf::from("/tmp/y");
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::desk(2);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn manifest_reflects_fleet_scales() {
        let mut cfg = ExperimentConfig::desk(5);
        cfg.dataset.cfo_scale = 2.0;
        let manifest = cfg.manifest();
        assert_eq!(manifest.fleet.len(), 4);
        assert_eq!(manifest.fleet[0].cfo_hz, -4000.0);
        assert_eq!(manifest.seed, 5);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# top comment\n\n[global]\n# inner\nseed = 3\n";
        assert_eq!(parse_config(text).unwrap().seed, 3);
    }
}
