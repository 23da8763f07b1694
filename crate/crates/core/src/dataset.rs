//! Dataset construction and persistence.
//!
//! A dataset directory holds little-endian `SEIR` record files plus a
//! key=value manifest:
//!
//! - `clean.seir`        impaired, power-normalized preambles before noise
//!   (snr = +inf, realization = 0); the online-augmentation source.
//! - `train_high.seir`   noisy 20 MHz training records.
//! - `train_low_<khz>khz.seir` decimated copies of the training records,
//!   one file per configured low rate.
//! - `test_high.seir`    noisy 20 MHz held-out records.
//! - `manifest.txt`      the manifest that produced the files, seed included.
//!
//! Record layout: magic `SEIR`, version u16, then per record: u16 emitter,
//! f32 snr_db, u16 realization, u32 fs_hz/1000, u32 length, and `length`
//! interleaved (I, Q) f32 pairs.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::filter::decimate;
use crate::impairment::{apply_impairments, default_fleet, EmitterProfile};
use crate::noise::add_awgn;
use crate::preamble::synth_clean_preamble;
use crate::seed::{derive_seed, rng_for};
use crate::signal::{ComplexSequence, SignalError, HIGH_RATE_HZ, LOW_RATES_HZ};

const MAGIC: &[u8; 4] = b"SEIR";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: not a SEIR dataset file (bad magic)")]
    BadMagic { path: PathBuf },

    #[error("{path}: unsupported format version {version}")]
    BadVersion { path: PathBuf, version: u16 },

    #[error("{path}: truncated record")]
    Truncated { path: PathBuf },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error(transparent)]
    Signal(#[from] SignalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One labeled example.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleRecord {
    pub emitter_id: u16,
    pub snr_db: f64,
    pub realization: u16,
    pub sequence: ComplexSequence,
}

/// Everything needed to materialize a dataset deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub fleet: Vec<EmitterProfile>,
    pub per_emitter_count: usize,
    pub train_count_per_realization: usize,
    pub snr_grid_db: Vec<f64>,
    pub realizations: u16,
    pub low_rates_hz: Vec<f64>,
    pub seed: u64,
}

impl DatasetManifest {
    /// The full-scale layout: 4 emitters, 2,000 preambles each, 1,600 in
    /// train per noise realization, SNR 9..30 dB in 3 dB steps, 10
    /// realizations.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            fleet: default_fleet(1.0),
            per_emitter_count: 2000,
            train_count_per_realization: 1600,
            snr_grid_db: default_snr_grid(),
            realizations: 10,
            low_rates_hz: LOW_RATES_HZ.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.fleet.is_empty() {
            return Err(DatasetError::InvalidManifest("fleet is empty".into()));
        }
        let mut ids: Vec<u16> = self.fleet.iter().map(|p| p.emitter_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.fleet.len() {
            return Err(DatasetError::InvalidManifest(
                "emitter ids must be unique".into(),
            ));
        }
        if self.train_count_per_realization >= self.per_emitter_count {
            return Err(DatasetError::InvalidManifest(format!(
                "train count {} must be < per-emitter count {}",
                self.train_count_per_realization, self.per_emitter_count
            )));
        }
        if self.snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidManifest(
                "snr grid must be strictly increasing".into(),
            ));
        }
        if self.realizations == 0 {
            return Err(DatasetError::InvalidManifest(
                "need at least one realization".into(),
            ));
        }
        for &r in &self.low_rates_hz {
            if !LOW_RATES_HZ.contains(&r) {
                return Err(DatasetError::InvalidManifest(format!(
                    "unsupported low rate {r} Hz"
                )));
            }
        }
        Ok(())
    }

    /// Number of clean impaired preambles across the fleet.
    pub fn base_preamble_count(&self) -> usize {
        self.fleet.len() * self.per_emitter_count
    }

    pub fn test_count_per_realization(&self) -> usize {
        self.per_emitter_count - self.train_count_per_realization
    }
}

/// The 9..30 dB grid in 3 dB increments.
pub fn default_snr_grid() -> Vec<f64> {
    (0..8).map(|i| 9.0 + 3.0 * i as f64).collect()
}

/// The test-SNR -> train-SNR mapping found by the grid search.
pub fn default_train_snr_pairs() -> Vec<(f64, f64)> {
    vec![
        (9.0, 9.0),
        (12.0, 9.0),
        (15.0, 9.0),
        (18.0, 12.0),
        (21.0, 15.0),
        (24.0, 15.0),
        (27.0, 15.0),
        (30.0, 18.0),
    ]
}

/// Which preamble indices belong to the training split for one
/// (emitter, snr, realization) cell. Seed-deterministic.
pub fn train_membership(
    manifest: &DatasetManifest,
    emitter_idx: usize,
    snr_idx: usize,
    realization: u16,
) -> Vec<bool> {
    let mut indices: Vec<usize> = (0..manifest.per_emitter_count).collect();
    let mut rng = rng_for(
        manifest.seed,
        "train-split",
        &[emitter_idx as u64, snr_idx as u64, u64::from(realization)],
    );
    indices.shuffle(&mut rng);
    let mut member = vec![false; manifest.per_emitter_count];
    for &i in indices.iter().take(manifest.train_count_per_realization) {
        member[i] = true;
    }
    member
}

/// Counts reported after a build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub base_preambles: usize,
    pub clean_records: usize,
    pub train_records: usize,
    pub test_records: usize,
    pub low_rate_files: usize,
}

struct EmitterOutput {
    clean: Vec<PreambleRecord>,
    train: Vec<PreambleRecord>,
    test: Vec<PreambleRecord>,
}

fn build_emitter(manifest: &DatasetManifest, emitter_idx: usize) -> Result<EmitterOutput, DatasetError> {
    let profile = &manifest.fleet[emitter_idx];
    let clean_preamble = synth_clean_preamble(HIGH_RATE_HZ)?;
    let splits: Vec<Vec<Vec<bool>>> = (0..manifest.snr_grid_db.len())
        .map(|snr_idx| {
            (1..=manifest.realizations)
                .map(|r| train_membership(manifest, emitter_idx, snr_idx, r))
                .collect()
        })
        .collect();

    let mut out = EmitterOutput {
        clean: Vec::with_capacity(manifest.per_emitter_count),
        train: Vec::new(),
        test: Vec::new(),
    };
    for p in 0..manifest.per_emitter_count {
        let impair_seed = derive_seed(manifest.seed, "impair", &[emitter_idx as u64, p as u64]);
        let impaired = apply_impairments(&clean_preamble, profile, impair_seed);
        let normalized = impaired.normalized_to_unit_power();
        out.clean.push(PreambleRecord {
            emitter_id: profile.emitter_id,
            snr_db: f64::INFINITY,
            realization: 0,
            sequence: normalized.clone(),
        });
        for (snr_idx, &snr_db) in manifest.snr_grid_db.iter().enumerate() {
            for r in 1..=manifest.realizations {
                let noise_seed = derive_seed(
                    manifest.seed,
                    "noise",
                    &[emitter_idx as u64, p as u64, snr_idx as u64, u64::from(r)],
                );
                let noisy = add_awgn(&normalized, snr_db, noise_seed)?;
                let record = PreambleRecord {
                    emitter_id: profile.emitter_id,
                    snr_db,
                    realization: r,
                    sequence: noisy,
                };
                if splits[snr_idx][usize::from(r) - 1][p] {
                    out.train.push(record);
                } else {
                    out.test.push(record);
                }
            }
        }
    }
    Ok(out)
}

/// Builds and persists the dataset into `dir`. Extra manifest entries (for
/// example the experiment config hash) are appended to `manifest.txt`.
pub fn build_dataset(
    manifest: &DatasetManifest,
    dir: &Path,
    extra_manifest_entries: &[(String, String)],
) -> Result<DatasetSummary, DatasetError> {
    manifest.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let outputs: Vec<EmitterOutput> = (0..manifest.fleet.len())
        .into_par_iter()
        .map(|e| build_emitter(manifest, e))
        .collect::<Result<_, _>>()?;

    let mut clean = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for o in outputs {
        clean.extend(o.clean);
        train.extend(o.train);
        test.extend(o.test);
    }

    write_records(&dir.join("clean.seir"), &clean)?;
    write_records(&dir.join("train_high.seir"), &train)?;
    write_records(&dir.join("test_high.seir"), &test)?;

    for &rate in &manifest.low_rates_hz {
        let factor = (HIGH_RATE_HZ / rate).round() as usize;
        let low: Vec<PreambleRecord> = train
            .par_iter()
            .map(|rec| {
                decimate(&rec.sequence, factor).map(|sequence| PreambleRecord {
                    sequence,
                    ..rec.clone()
                })
            })
            .collect::<Result<_, _>>()?;
        write_records(&dir.join(low_rate_file_name(rate)), &low)?;
    }

    write_manifest(&dir.join("manifest.txt"), manifest, extra_manifest_entries)?;

    Ok(DatasetSummary {
        base_preambles: manifest.base_preamble_count(),
        clean_records: clean.len(),
        train_records: train.len(),
        test_records: test.len(),
        low_rate_files: manifest.low_rates_hz.len(),
    })
}

pub fn low_rate_file_name(rate_hz: f64) -> String {
    format!("train_low_{}khz.seir", (rate_hz / 1000.0).round() as u64)
}

pub fn write_records(path: &Path, records: &[PreambleRecord]) -> Result<(), DatasetError> {
    let mut buf: Vec<u8> = Vec::with_capacity(16 + records.len() * (16 + 8 * 320));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for rec in records {
        buf.extend_from_slice(&rec.emitter_id.to_le_bytes());
        buf.extend_from_slice(&(rec.snr_db as f32).to_le_bytes());
        buf.extend_from_slice(&rec.realization.to_le_bytes());
        let fs_khz = (rec.sequence.fs_hz() / 1000.0).round() as u32;
        buf.extend_from_slice(&fs_khz.to_le_bytes());
        buf.extend_from_slice(&(rec.sequence.len() as u32).to_le_bytes());
        for s in rec.sequence.samples() {
            buf.extend_from_slice(&(s.re as f32).to_le_bytes());
            buf.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<PreambleRecord>, DatasetError> {
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err(path))?;
    let mut cursor = 0usize;

    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], DatasetError> {
        if *cursor + n > bytes.len() {
            return Err(DatasetError::Truncated {
                path: path.to_path_buf(),
            });
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(DatasetError::BadVersion {
            path: path.to_path_buf(),
            version,
        });
    }

    let mut records = Vec::new();
    while cursor < bytes.len() {
        let emitter_id = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap());
        let snr_db = f32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
        let realization = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap());
        let fs_khz = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
        let length = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let mut samples = Vec::with_capacity(length);
        for _ in 0..length {
            let re = f32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
            let im = f32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
            samples.push(Complex64::new(f64::from(re), f64::from(im)));
        }
        records.push(PreambleRecord {
            emitter_id,
            snr_db: f64::from(snr_db),
            realization,
            sequence: ComplexSequence::new(samples, f64::from(fs_khz) * 1000.0)?,
        });
    }
    Ok(records)
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip formatting keeps manifests byte-stable.
    format!("{v}")
}

pub fn write_manifest(
    path: &Path,
    manifest: &DatasetManifest,
    extra: &[(String, String)],
) -> Result<(), DatasetError> {
    let mut text = String::new();
    text.push_str(&format!("seed = {}\n", manifest.seed));
    text.push_str(&format!(
        "per_emitter_count = {}\n",
        manifest.per_emitter_count
    ));
    text.push_str(&format!(
        "train_count_per_realization = {}\n",
        manifest.train_count_per_realization
    ));
    text.push_str(&format!("realizations = {}\n", manifest.realizations));
    text.push_str(&format!(
        "snr_grid_db = {}\n",
        manifest
            .snr_grid_db
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(",")
    ));
    text.push_str(&format!(
        "low_rates_hz = {}\n",
        manifest
            .low_rates_hz
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(",")
    ));
    text.push_str(&format!("emitters = {}\n", manifest.fleet.len()));
    for p in &manifest.fleet {
        let id = p.emitter_id;
        text.push_str(&format!(
            "emitter.{id}.iq_gain_imbalance_db = {}\n",
            fmt_f64(p.iq_gain_imbalance_db)
        ));
        text.push_str(&format!(
            "emitter.{id}.iq_phase_imbalance_rad = {}\n",
            fmt_f64(p.iq_phase_imbalance_rad)
        ));
        text.push_str(&format!("emitter.{id}.cfo_hz = {}\n", fmt_f64(p.cfo_hz)));
        text.push_str(&format!(
            "emitter.{id}.phase_noise_std_rad = {}\n",
            fmt_f64(p.phase_noise_std_rad)
        ));
        text.push_str(&format!(
            "emitter.{id}.dc_offset = {},{}\n",
            fmt_f64(p.dc_offset.re),
            fmt_f64(p.dc_offset.im)
        ));
        text.push_str(&format!(
            "emitter.{id}.pa_gain_compression = {}\n",
            fmt_f64(p.pa_gain_compression)
        ));
    }
    for (k, v) in extra {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(path, text).map_err(io_err(path))
}
