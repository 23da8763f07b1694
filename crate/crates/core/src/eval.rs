//! SEI classifier training, classification, and the method comparison.
//!
//! One classifier is trained per (tensor width, training SNR); the training
//! SNR for each test SNR comes from a grid-searched map that never trains
//! above the test SNR. The comparison grid evaluates, per collection rate:
//! the cGAN upsampling route, direct low-rate classification, the two
//! interpolation baselines, and the full-rate reference. All routes share
//! classifiers, seeds, and test records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::cgan::{CganError, TrainedGenerator, HIGH_WIDTH};
use crate::dataset::{DatasetError, PreambleRecord};
use crate::filter::decimate;
use crate::nn::{
    categorical_cross_entropy, load_checkpoint, save_checkpoint, AdamHyper, AdamOptimizer,
    LayerSpec, Network, NnError, Padding, TensorND,
};
use crate::resample::{csi_upsample, lai_upsample, ResampleError};
use crate::seed::{derive_seed, rng_for};
use crate::signal::{ComplexSequence, SignalError, HIGH_RATE_HZ};
use crate::spectro::online_augment;
use crate::tensorize::{to_tensor, PreambleTensor, TensorizeError, FEATURE_ROWS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("tensors have mixed widths: {a} and {b}")]
    MixedWidths { a: usize, b: usize },

    #[error("tensor width {got} does not match classifier width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("label {label} outside 1..={num_classes}")]
    BadLabel { label: u16, num_classes: usize },

    #[error(
        "no trained generator for {} MHz; run: seilab train --config <config> --stage cgan --f-low {}",
        low_rate_hz / 1e6, low_rate_hz / 1e6
    )]
    MissingGenerator { low_rate_hz: f64 },

    #[error("no decimated training records for {} MHz in the dataset", low_rate_hz / 1e6)]
    MissingLowRate { low_rate_hz: f64 },

    #[error("test SNR {0} dB has no entry in the train-SNR map")]
    UnmappedSnr(f64),

    #[error("train SNR {train} dB exceeds its test SNR {test} dB")]
    TrainAboveTest { test: f64, train: f64 },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Tensorize(#[from] TensorizeError),

    #[error(transparent)]
    Cgan(#[from] CganError),

    #[error(transparent)]
    Signal(#[from] SignalError),

    #[error(transparent)]
    Resample(#[from] ResampleError),

    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Evaluation routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FullRate,
    Cgan,
    CnnOnly,
    Lai,
    Csi,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FullRate => "full_rate",
            Method::Cgan => "cgan",
            Method::CnnOnly => "cnn_only",
            Method::Lai => "lai",
            Method::Csi => "csi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "full_rate" => Method::FullRate,
            "cgan" => Method::Cgan,
            "cnn_only" => Method::CnnOnly,
            "lai" => Method::Lai,
            "csi" => Method::Csi,
            _ => return None,
        })
    }
}

/// Test-SNR to train-SNR mapping; training never exceeds the test SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSnrMap {
    pairs: Vec<(f64, f64)>,
}

impl TrainSnrMap {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, EvalError> {
        for &(test, train) in &pairs {
            if train > test {
                return Err(EvalError::TrainAboveTest { test, train });
            }
        }
        Ok(Self { pairs })
    }

    /// The grid-searched reference map for the 9..30 dB test grid.
    pub fn reference() -> Self {
        Self {
            pairs: crate::dataset::default_train_snr_pairs(),
        }
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn train_for(&self, test_snr_db: f64) -> Result<f64, EvalError> {
        self.pairs
            .iter()
            .find(|(test, _)| (test - test_snr_db).abs() < 1e-9)
            .map(|&(_, train)| train)
            .ok_or(EvalError::UnmappedSnr(test_snr_db))
    }

    /// Distinct train SNRs needed to cover `test_snrs`.
    pub fn required_train_snrs(&self, test_snrs: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out: Vec<f64> = Vec::new();
        for &t in test_snrs {
            let train = self.train_for(t)?;
            if !out.iter().any(|&x| (x - train).abs() < 1e-9) {
                out.push(train);
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(out)
    }
}

/// The classifier trunk shared with the discriminator, with a softmax head.
pub fn classifier_specs(width: usize, num_classes: usize) -> Vec<LayerSpec> {
    let conv = |in_c: usize, out_c: usize| LayerSpec::Conv2d {
        in_channels: in_c,
        out_channels: out_c,
        kernel: (1, 3),
        padding: Padding::Same,
    };
    vec![
        // Leading pool: features read a smoothed view, which keeps the
        // classifier's attention on content that survives decimation.
        LayerSpec::MaxPool2d { pool: (1, 2) },
        conv(1, 8),
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: (1, 2) },
        conv(8, 16),
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: (1, 2) },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 16 * FEATURE_ROWS * (width / 8),
            out_features: 64,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            in_features: 64,
            out_features: num_classes,
        },
        LayerSpec::Softmax,
    ]
}

pub fn build_classifier(
    width: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Network<f32>, EvalError> {
    Ok(Network::new(
        vec![1, FEATURE_ROWS, width],
        classifier_specs(width, num_classes),
        seed,
    )?)
}

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub num_classes: usize,
    pub epochs: usize,
    /// Early stop after this many epochs without held-out improvement.
    pub patience: usize,
    pub holdout_fraction: f64,
    pub minibatch: usize,
    pub adam: AdamHyper,
    /// Optional cap on the training examples (seed-deterministic subsample).
    pub train_cap: Option<usize>,
    pub seed: u64,
}

impl ClassifierConfig {
    pub fn reference(num_classes: usize, seed: u64) -> Self {
        Self {
            num_classes,
            epochs: 200,
            patience: 20,
            holdout_fraction: 0.1,
            minibatch: 64,
            adam: AdamHyper {
                lr: 1e-3,
                l2: 1e-4,
                ..Default::default()
            },
            train_cap: None,
            seed,
        }
    }
}

/// Online-augmentation source for classifier training: pre-noise records
/// plus the decimation applied after noise injection.
#[derive(Debug, Clone)]
pub struct ClassifierAugment {
    pub clean: Vec<PreambleRecord>,
    pub decimate_factor: usize,
    pub snr_range_db: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

fn class_index(label: u16, num_classes: usize) -> Result<usize, EvalError> {
    if label == 0 || usize::from(label) > num_classes {
        return Err(EvalError::BadLabel { label, num_classes });
    }
    Ok(usize::from(label) - 1)
}

/// Trains the CNN classifier on unconditioned tensors. Deterministic given
/// the config seed; early-stops on held-out loss unless augmentation is
/// active (augmented runs use the full epoch budget).
pub fn train_classifier(
    tensors: &[PreambleTensor],
    cfg: &ClassifierConfig,
    augment: Option<&ClassifierAugment>,
) -> Result<(Network<f32>, Vec<ClassifierEpochLog>), EvalError> {
    if tensors.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }
    let width = tensors[0].width();
    for t in tensors {
        if t.width() != width {
            return Err(EvalError::MixedWidths {
                a: width,
                b: t.width(),
            });
        }
    }

    let mut indices: Vec<usize> = (0..tensors.len()).collect();
    indices.shuffle(&mut rng_for(cfg.seed, "cls-split", &[]));
    let holdout_len = if augment.is_none() && cfg.patience > 0 {
        ((tensors.len() as f64 * cfg.holdout_fraction) as usize).min(tensors.len() - 1)
    } else {
        0
    };
    let (holdout_idx, train_part) = indices.split_at(holdout_len);
    let mut train_idx = train_part.to_vec();
    if let Some(cap) = cfg.train_cap {
        train_idx.truncate(cap.max(1));
    }
    if train_idx.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }

    let inputs: Vec<TensorND<f32>> = tensors
        .iter()
        .map(|t| t.nn_input().map(|v| v as f32))
        .collect();
    let labels: Vec<usize> = tensors
        .iter()
        .map(|t| class_index(t.label, cfg.num_classes))
        .collect::<Result<_, _>>()?;

    let mut net = build_classifier(
        width,
        cfg.num_classes,
        derive_seed(cfg.seed, "cls-init", &[width as u64]),
    )?;
    let mut opt = AdamOptimizer::for_network(&net, cfg.adam);

    let mut log = Vec::new();
    let mut best: Option<(f64, Vec<Vec<f32>>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_for(cfg.seed, "cls-epoch", &[epoch as u64]));

        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for (batch_no, batch) in order.chunks(cfg.minibatch).enumerate() {
            // Fresh noise per minibatch when augmenting.
            let augmented: Option<Vec<TensorND<f32>>> = match augment {
                Some(aug) => {
                    let seqs: Vec<ComplexSequence> = batch
                        .iter()
                        .map(|&i| aug.clean[i % aug.clean.len()].sequence.clone())
                        .collect();
                    let noisy = online_augment(
                        &seqs,
                        aug.snr_range_db,
                        derive_seed(cfg.seed, "cls-augment", &[epoch as u64, batch_no as u64]),
                    )?;
                    let mut out = Vec::with_capacity(batch.len());
                    for (&i, seq) in batch.iter().zip(noisy) {
                        let seq = if aug.decimate_factor > 1 {
                            decimate(&seq, aug.decimate_factor)?
                        } else {
                            seq
                        };
                        let rec = PreambleRecord {
                            sequence: seq,
                            ..aug.clean[i % aug.clean.len()].clone()
                        };
                        out.push(to_tensor(&rec)?.nn_input().map(|v| v as f32));
                    }
                    Some(out)
                }
                None => None,
            };

            net.zero_grads();
            for (slot, &i) in batch.iter().enumerate() {
                let input = match &augmented {
                    Some(batch_inputs) => &batch_inputs[slot],
                    None => &inputs[i],
                };
                let probs = net.forward(input)?;
                let label = match augment {
                    Some(aug) => class_index(aug.clean[i % aug.clean.len()].emitter_id, cfg.num_classes)?,
                    None => labels[i],
                };
                let (loss, dprobs) = categorical_cross_entropy(&probs, &[label])?;
                loss_sum += loss;
                seen += 1;
                // Per-sample term of the batch-mean loss.
                let scaled = dprobs.map(|v| v / batch.len() as f32);
                net.backward(&scaled)?;
            }
            opt.step(&mut net)?;
        }
        let train_loss = loss_sum / seen.max(1) as f64;

        let holdout_loss = if holdout_len > 0 {
            let mut sum = 0.0f64;
            for &i in holdout_idx {
                let probs = net.infer(&inputs[i])?;
                let (loss, _) = categorical_cross_entropy(&probs, &[labels[i]])?;
                sum += loss;
            }
            Some(sum / holdout_len as f64)
        } else {
            None
        };

        log.push(ClassifierEpochLog {
            epoch,
            train_loss,
            holdout_loss,
        });

        if let Some(h) = holdout_loss {
            let improved = best.as_ref().map_or(true, |(b, _)| h < *b);
            if improved {
                let params = net
                    .layers()
                    .iter()
                    .flat_map(|l| [l.weights.to_f32_vec(), l.bias.to_f32_vec()])
                    .collect();
                best = Some((h, params));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, params)) = best {
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            layer.weights.data_mut().copy_from_slice(&params[2 * li]);
            layer.bias.data_mut().copy_from_slice(&params[2 * li + 1]);
        }
    }
    Ok((net, log))
}

/// Argmax with ties broken toward the lowest index; returns the 1-based
/// label.
pub fn argmax_label(probs: &[f32]) -> u16 {
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best + 1) as u16
}

/// Softmax argmax classification of one unconditioned tensor.
pub fn classify(net: &mut Network<f32>, tensor: &PreambleTensor) -> Result<u16, EvalError> {
    let expected = net.input_shape()[2];
    if tensor.width() != expected || tensor.channels() != 1 {
        return Err(EvalError::WidthMismatch {
            expected,
            got: tensor.width(),
        });
    }
    let probs = net.infer(&tensor.nn_input().map(|v| v as f32))?;
    Ok(argmax_label(probs.data()))
}

/// One test example ready for classification.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub tensor: PreambleTensor,
    pub emitter_id: u16,
    pub snr_db: f64,
    pub realization: u16,
}

fn snr_key(snr_db: f64) -> i64 {
    (snr_db * 1000.0).round() as i64
}

/// Accuracy per (SNR, emitter) plus per-SNR averages.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub low_rate_hz: f64,
    /// (snr mdB, emitter) -> (correct, total)
    cells: BTreeMap<(i64, u16), (usize, usize)>,
}

impl EvalReport {
    pub fn new(method: Method, low_rate_hz: f64) -> Self {
        Self {
            method,
            low_rate_hz,
            cells: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, snr_db: f64, emitter_id: u16, correct: bool) {
        let cell = self
            .cells
            .entry((snr_key(snr_db), emitter_id))
            .or_insert((0, 0));
        cell.1 += 1;
        if correct {
            cell.0 += 1;
        }
    }

    pub fn snrs(&self) -> Vec<f64> {
        let mut keys: Vec<i64> = self.cells.keys().map(|(s, _)| *s).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter().map(|k| k as f64 / 1000.0).collect()
    }

    pub fn emitters(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.cells.keys().map(|(_, e)| *e).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Percent correct for one cell; `None` when the cell is empty.
    pub fn cell_accuracy_pct(&self, snr_db: f64, emitter_id: u16) -> Option<f64> {
        self.cells
            .get(&(snr_key(snr_db), emitter_id))
            .filter(|(_, total)| *total > 0)
            .map(|(correct, total)| 100.0 * *correct as f64 / *total as f64)
    }

    /// Arithmetic mean of the per-emitter cells at one SNR.
    pub fn average_accuracy_pct(&self, snr_db: f64) -> Option<f64> {
        let values: Vec<f64> = self
            .emitters()
            .into_iter()
            .filter_map(|e| self.cell_accuracy_pct(snr_db, e))
            .collect();
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean of the per-SNR averages over the whole grid.
    pub fn mean_over_snr_pct(&self) -> Option<f64> {
        let values: Vec<f64> = self
            .snrs()
            .into_iter()
            .filter_map(|s| self.average_accuracy_pct(s))
            .collect();
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Classifies every item with one network and tallies the report.
pub fn evaluate(
    net: &mut Network<f32>,
    items: &[EvalItem],
    method: Method,
    low_rate_hz: f64,
) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport::new(method, low_rate_hz);
    for item in items {
        let predicted = classify(net, &item.tensor)?;
        report.record(item.snr_db, item.emitter_id, predicted == item.emitter_id);
    }
    Ok(report)
}

/// Everything run_comparison needs from the dataset.
pub struct ComparisonData<'a> {
    pub train_high: &'a [PreambleRecord],
    /// (rate Hz, decimated twins of train_high).
    pub train_low: Vec<(f64, &'a [PreambleRecord])>,
    pub test_high: &'a [PreambleRecord],
    /// Pre-noise records for online augmentation (may be empty when unused).
    pub clean: &'a [PreambleRecord],
    pub generators: Vec<(f64, TrainedGenerator)>,
}

#[derive(Debug, Clone)]
pub struct ComparisonPlan {
    pub methods: Vec<Method>,
    pub low_rates_hz: Vec<f64>,
    pub snr_map: TrainSnrMap,
    pub classifier: ClassifierConfig,
    /// Fresh-noise augmentation for classifier training.
    pub augment_snr_range_db: Option<(f64, f64)>,
    /// Directory for cached classifier checkpoints.
    pub classifier_cache_dir: Option<PathBuf>,
}

fn classifier_cache_path(dir: &Path, width: usize, train_snr_db: f64) -> PathBuf {
    dir.join(format!("cls_w{width}_snr{}.seiw", snr_key(train_snr_db)))
}

fn tensors_at_snr(
    records: &[PreambleRecord],
    snr_db: f64,
) -> Result<Vec<PreambleTensor>, EvalError> {
    records
        .iter()
        .filter(|r| (r.snr_db - snr_db).abs() < 1e-9)
        .map(|r| to_tensor(r).map_err(EvalError::from))
        .collect()
}

fn augment_source_at_snr(
    clean: &[PreambleRecord],
    train_records: &[PreambleRecord],
    snr_db: f64,
    factor: usize,
    range: (f64, f64),
) -> Option<ClassifierAugment> {
    if clean.is_empty() {
        return None;
    }
    // One pre-noise record per training record, matched by emitter.
    let selected: Vec<PreambleRecord> = train_records
        .iter()
        .filter(|r| (r.snr_db - snr_db).abs() < 1e-9)
        .enumerate()
        .map(|(i, r)| {
            let candidates: Vec<&PreambleRecord> = clean
                .iter()
                .filter(|c| c.emitter_id == r.emitter_id)
                .collect();
            let pick = candidates[i % candidates.len()];
            PreambleRecord {
                emitter_id: r.emitter_id,
                snr_db: r.snr_db,
                realization: r.realization,
                sequence: pick.sequence.clone(),
            }
        })
        .collect();
    if selected.is_empty() {
        return None;
    }
    Some(ClassifierAugment {
        clean: selected,
        decimate_factor: factor,
        snr_range_db: range,
    })
}

/// Trains (or loads from cache) one classifier for (width, train SNR).
fn classifier_for(
    records: &[PreambleRecord],
    clean: &[PreambleRecord],
    width: usize,
    factor: usize,
    train_snr_db: f64,
    plan: &ComparisonPlan,
) -> Result<Network<f32>, EvalError> {
    let cache = plan
        .classifier_cache_dir
        .as_ref()
        .map(|d| classifier_cache_path(d, width, train_snr_db));
    let mut cfg = plan.classifier.clone();
    cfg.seed = derive_seed(
        cfg.seed,
        "classifier",
        &[width as u64, snr_key(train_snr_db) as u64],
    );

    if let Some(path) = &cache {
        if path.exists() {
            let mut net = build_classifier(width, cfg.num_classes, 0)?;
            load_checkpoint(&mut net, path)?;
            return Ok(net);
        }
    }
    let tensors = tensors_at_snr(records, train_snr_db)?;
    if tensors.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }
    let augment = plan
        .augment_snr_range_db
        .and_then(|range| augment_source_at_snr(clean, records, train_snr_db, factor, range));
    let (net, _) = train_classifier(&tensors, &cfg, augment.as_ref())?;
    if let Some(path) = &cache {
        save_checkpoint(&net, path)?;
    }
    Ok(net)
}

fn observed_test_snrs(test: &[PreambleRecord]) -> Vec<f64> {
    let mut keys: Vec<i64> = test.iter().map(|r| snr_key(r.snr_db)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter().map(|k| k as f64 / 1000.0).collect()
}

/// Trains (or loads) every classifier the plan needs, filling the cache.
/// Returns how many (width, train SNR) classifiers are ready.
pub fn warm_classifiers(data: &ComparisonData, plan: &ComparisonPlan) -> Result<usize, EvalError> {
    let test_snrs = observed_test_snrs(data.test_high);
    let train_snrs = plan.snr_map.required_train_snrs(&test_snrs)?;
    let mut count = 0usize;
    let need_wide = plan.methods.iter().any(|m| {
        matches!(
            m,
            Method::FullRate | Method::Cgan | Method::Lai | Method::Csi
        )
    });
    if need_wide {
        for &snr in &train_snrs {
            classifier_for(data.train_high, data.clean, HIGH_WIDTH, 1, snr, plan)?;
            count += 1;
        }
    }
    if plan.methods.contains(&Method::CnnOnly) {
        for &rate in &plan.low_rates_hz {
            let records = data
                .train_low
                .iter()
                .find(|(r, _)| *r == rate)
                .map(|(_, recs)| *recs)
                .ok_or(EvalError::MissingLowRate { low_rate_hz: rate })?;
            let width = crate::cgan::width_for_rate(rate)?;
            let factor = (HIGH_RATE_HZ / rate).round() as usize;
            for &snr in &train_snrs {
                classifier_for(records, data.clean, width, factor, snr, plan)?;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Runs the full (method x rate) comparison plus the full-rate reference.
/// Classifiers are shared across methods: one per (width, train SNR).
pub fn run_comparison(
    data: &ComparisonData,
    plan: &ComparisonPlan,
) -> Result<Vec<EvalReport>, EvalError> {
    let test_snrs = observed_test_snrs(data.test_high);
    let train_snrs = plan.snr_map.required_train_snrs(&test_snrs)?;

    // Wide classifiers serve full_rate, cgan, lai, and csi.
    let need_wide = plan.methods.iter().any(|m| {
        matches!(
            m,
            Method::FullRate | Method::Cgan | Method::Lai | Method::Csi
        )
    });
    let mut wide: BTreeMap<i64, Network<f32>> = BTreeMap::new();
    if need_wide {
        let trained: Vec<(i64, Network<f32>)> = train_snrs
            .par_iter()
            .map(|&snr| {
                classifier_for(data.train_high, data.clean, HIGH_WIDTH, 1, snr, plan)
                    .map(|n| (snr_key(snr), n))
            })
            .collect::<Result<_, _>>()?;
        wide.extend(trained);
    }

    // Width-adapted classifiers for the direct low-rate route.
    let mut narrow: BTreeMap<(u64, i64), Network<f32>> = BTreeMap::new();
    if plan.methods.contains(&Method::CnnOnly) {
        let mut jobs = Vec::new();
        for &rate in &plan.low_rates_hz {
            for &snr in &train_snrs {
                jobs.push((rate, snr));
            }
        }
        let trained: Vec<((u64, i64), Network<f32>)> = jobs
            .par_iter()
            .map(|&(rate, snr)| {
                let records = data
                    .train_low
                    .iter()
                    .find(|(r, _)| *r == rate)
                    .map(|(_, recs)| *recs)
                    .ok_or(EvalError::MissingLowRate { low_rate_hz: rate })?;
                let width = crate::cgan::width_for_rate(rate)?;
                let factor = (HIGH_RATE_HZ / rate).round() as usize;
                classifier_for(records, data.clean, width, factor, snr, plan)
                    .map(|n| ((rate as u64, snr_key(snr)), n))
            })
            .collect::<Result<_, _>>()?;
        narrow.extend(trained);
    }

    let mut reports = Vec::new();

    if plan.methods.contains(&Method::FullRate) {
        let mut report = EvalReport::new(Method::FullRate, HIGH_RATE_HZ);
        for rec in data.test_high {
            let train_snr = plan.snr_map.train_for(rec.snr_db)?;
            let net = wide.get_mut(&snr_key(train_snr)).expect("trained above");
            let predicted = classify(net, &to_tensor(rec)?)?;
            report.record(rec.snr_db, rec.emitter_id, predicted == rec.emitter_id);
        }
        reports.push(report);
    }

    for &rate in &plan.low_rates_hz {
        let factor = (HIGH_RATE_HZ / rate).round() as usize;
        for method in &plan.methods {
            if *method == Method::FullRate {
                continue;
            }
            let mut generator = match method {
                Method::Cgan => Some(
                    data.generators
                        .iter()
                        .find(|(r, _)| *r == rate)
                        .map(|(_, g)| g.clone())
                        .ok_or(EvalError::MissingGenerator { low_rate_hz: rate })?,
                ),
                _ => None,
            };
            let mut report = EvalReport::new(*method, rate);
            for rec in data.test_high {
                let train_snr = plan.snr_map.train_for(rec.snr_db)?;
                let low_rec = PreambleRecord {
                    sequence: decimate(&rec.sequence, factor)?,
                    ..rec.clone()
                };
                let (tensor, net) = match method {
                    Method::CnnOnly => (
                        to_tensor(&low_rec)?,
                        narrow
                            .get_mut(&(rate as u64, snr_key(train_snr)))
                            .expect("trained above"),
                    ),
                    Method::Lai | Method::Csi => {
                        let up = if *method == Method::Lai {
                            lai_upsample(&low_rec.sequence, factor)?
                        } else {
                            csi_upsample(&low_rec.sequence, factor)?
                        };
                        let rec320 = PreambleRecord {
                            sequence: up,
                            ..rec.clone()
                        };
                        (
                            to_tensor(&rec320)?,
                            wide.get_mut(&snr_key(train_snr)).expect("trained above"),
                        )
                    }
                    Method::Cgan => (
                        generator
                            .as_mut()
                            .expect("generator present")
                            .upsample(&low_rec, low_rec.emitter_id)?,
                        wide.get_mut(&snr_key(train_snr)).expect("trained above"),
                    ),
                    Method::FullRate => unreachable!(),
                };
                let predicted = classify(net, &tensor)?;
                report.record(rec.snr_db, rec.emitter_id, predicted == rec.emitter_id);
            }
            reports.push(report);
        }
    }
    Ok(reports)
}

fn fmt_rate_mhz(rate_hz: f64) -> String {
    let mhz = rate_hz / 1e6;
    if (mhz - mhz.round()).abs() < 1e-9 {
        format!("{}", mhz.round() as u64)
    } else {
        format!("{mhz}")
    }
}

fn fmt_acc(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.1}"),
        None => "missing".into(),
    }
}

/// Report CSV: method, f_low_hz, snr_db, emitter_id (0 = average),
/// accuracy_pct at 0.1% resolution.
pub fn write_report_csv(
    report: &EvalReport,
    path: &Path,
    header_comments: &[String],
) -> Result<(), EvalError> {
    let mut text = String::new();
    for c in header_comments {
        text.push_str(&format!("# {c}\n"));
    }
    text.push_str("method,f_low_hz,snr_db,emitter_id,accuracy_pct\n");
    let rate = report.low_rate_hz.round() as u64;
    for snr in report.snrs() {
        text.push_str(&format!(
            "{},{},{},0,{}\n",
            report.method.as_str(),
            rate,
            snr,
            fmt_acc(report.average_accuracy_pct(snr))
        ));
        for emitter in report.emitters() {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                report.method.as_str(),
                rate,
                snr,
                emitter,
                fmt_acc(report.cell_accuracy_pct(snr, emitter))
            ));
        }
    }
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn report_file_name(report: &EvalReport) -> String {
    if report.method == Method::FullRate {
        "report_full_rate.csv".into()
    } else {
        format!(
            "report_{}_{}mhz.csv",
            report.method.as_str(),
            fmt_rate_mhz(report.low_rate_hz)
        )
    }
}

/// Plot-ready series mirroring the figure layouts: the rate-sweep
/// comparison (fig3), the interpolation comparison (fig4), and the
/// per-radio curves with full-rate references (fig5a/fig5b).
pub fn write_plotdata(
    reports: &[EvalReport],
    path: &Path,
    header_comments: &[String],
) -> Result<(), EvalError> {
    let find = |method: Method, rate: f64| {
        reports
            .iter()
            .find(|r| r.method == method && (r.low_rate_hz - rate).abs() < 1e-6)
    };
    let mut text = String::new();
    for c in header_comments {
        text.push_str(&format!("# {c}\n"));
    }
    text.push_str("figure,series,snr_db,accuracy_pct\n");

    let push_avg = |text: &mut String, figure: &str, series: &str, report: &EvalReport| {
        for snr in report.snrs() {
            if let Some(acc) = report.average_accuracy_pct(snr) {
                text.push_str(&format!("{figure},{series},{snr},{acc:.1}\n"));
            }
        }
    };

    for rate in [2.5e6, 5e6, 10e6] {
        for method in [Method::Cgan, Method::CnnOnly] {
            if let Some(r) = find(method, rate) {
                let series = format!("{}_{}mhz", method.as_str(), fmt_rate_mhz(rate));
                push_avg(&mut text, "fig3", &series, r);
            }
        }
    }
    for rate in [2.5e6, 5e6] {
        for method in [Method::Cgan, Method::Lai, Method::Csi] {
            if let Some(r) = find(method, rate) {
                let series = format!("{}_{}mhz", method.as_str(), fmt_rate_mhz(rate));
                push_avg(&mut text, "fig4", &series, r);
            }
        }
    }
    for (figure, rate) in [("fig5a", 5e6), ("fig5b", 2.5e6)] {
        if let Some(r) = find(Method::Cgan, rate) {
            for emitter in r.emitters() {
                for snr in r.snrs() {
                    if let Some(acc) = r.cell_accuracy_pct(snr, emitter) {
                        text.push_str(&format!(
                            "{figure},cgan_{}mhz_radio{emitter},{snr},{acc:.1}\n",
                            fmt_rate_mhz(rate)
                        ));
                    }
                }
            }
            if let Some(full) = reports.iter().find(|r| r.method == Method::FullRate) {
                for emitter in full.emitters() {
                    for snr in full.snrs() {
                        if let Some(acc) = full.cell_accuracy_pct(snr, emitter) {
                            text.push_str(&format!(
                                "{figure},full_rate_radio{emitter},{snr},{acc:.1}\n"
                            ));
                        }
                    }
                }
            }
        }
    }
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}
