//! Conditional GAN assembly, training, and the post-training upsampler.
//!
//! The generator is a convolutional autoencoder that maps a conditioned
//! low-rate tensor [2, 4, W] to the high-rate shape [2, 4, 320]; its width
//! multiplier equals 20 MHz over the collection rate. The 2.5 MHz variant
//! swaps the encoder max-pool for an upsample stage so the output still
//! reaches width 320. The discriminator is a CNN ending in one sigmoid
//! probability. Training alternates k discriminator steps (Adam) with one
//! generator step (SGD with momentum) per minibatch and stops early once
//! every discriminator output of an epoch sits within the equilibrium band
//! around 0.5.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::dataset::PreambleRecord;
use crate::nn::{
    gan_losses, AdamHyper, AdamOptimizer, GanLossConfig, LayerSpec, Network, NnError, Padding,
    SgdOptimizer, TensorND,
};
use crate::seed::{derive_seed, rng_for};
use crate::signal::{HIGH_RATE_HZ, LOW_RATES_HZ};
use crate::tensorize::{
    attach_label, strip_label_channel, LabelEmbedder, PreambleTensor, TensorizeError,
    FEATURE_ROWS,
};
use rand::seq::SliceRandom;

/// High-rate tensor width (20 MHz, 16 us).
pub const HIGH_WIDTH: usize = 320;

#[derive(Debug, Error)]
pub enum CganError {
    #[error("unsupported collection rate {0} Hz (expected 2.5, 5, or 10 MHz)")]
    UnsupportedRate(f64),

    #[error("training pair {index}: {detail}")]
    BadPair { index: usize, detail: String },

    #[error("record sampled at {got} Hz, generator expects {expected} Hz")]
    WrongInputRate { expected: f64, got: f64 },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("minibatch {minibatch} exceeds training-set size {pairs}")]
    MinibatchTooLarge { minibatch: usize, pairs: usize },

    #[error("state file {path}: {detail}")]
    BadState { path: String, detail: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Tensorize(#[from] TensorizeError),
}

/// Tensor width at a collection rate (16 us of samples).
pub fn width_for_rate(rate_hz: f64) -> Result<usize, CganError> {
    if !LOW_RATES_HZ.contains(&rate_hz) && rate_hz != HIGH_RATE_HZ {
        return Err(CganError::UnsupportedRate(rate_hz));
    }
    Ok((16e-6 * rate_hz).round() as usize)
}

/// Generator layer stack for one collection rate.
pub fn generator_specs(low_rate_hz: f64) -> Result<Vec<LayerSpec>, CganError> {
    if !LOW_RATES_HZ.contains(&low_rate_hz) {
        return Err(CganError::UnsupportedRate(low_rate_hz));
    }
    let width = width_for_rate(low_rate_hz)?;
    let conv = |in_c: usize, out_c: usize| LayerSpec::Conv2d {
        in_channels: in_c,
        out_channels: out_c,
        kernel: (1, 3),
        padding: Padding::Same,
    };
    let mut specs = vec![conv(2, 8), LayerSpec::Relu, conv(8, 16), LayerSpec::Relu];
    // The 2.5 MHz variant needs one extra width doubling; it replaces the
    // encoder max-pool with an upsample stage.
    let enc_width = if low_rate_hz == 2.5e6 {
        specs.push(LayerSpec::Upsample2d { factor: (1, 2) });
        width * 2
    } else {
        specs.push(LayerSpec::MaxPool2d { pool: (1, 2) });
        width / 2
    };
    // Code layer: few channels keep the hidden representation smaller than
    // the input wherever the encoder narrows.
    specs.push(conv(16, 3));
    specs.push(LayerSpec::Relu);

    let mut w = enc_width;
    let mut in_c = 3;
    while w < HIGH_WIDTH {
        specs.push(LayerSpec::Upsample2d { factor: (1, 2) });
        w *= 2;
        let out_c = if w < HIGH_WIDTH { 16 } else { 8 };
        specs.push(conv(in_c, out_c));
        specs.push(LayerSpec::Relu);
        in_c = out_c;
    }
    specs.push(conv(in_c, 2));
    specs.push(LayerSpec::Sigmoid);
    Ok(specs)
}

/// Shape of the generator's code (bottleneck) activation.
pub fn generator_code_shape(low_rate_hz: f64) -> Result<Vec<usize>, CganError> {
    let specs = generator_specs(low_rate_hz)?;
    let width = width_for_rate(low_rate_hz)?;
    let mut shape = vec![2, FEATURE_ROWS, width];
    for spec in &specs {
        shape = spec.output_shape(&shape)?;
        // The code layer is the first 3-channel conv output.
        if matches!(
            spec,
            LayerSpec::Conv2d {
                out_channels: 3,
                ..
            }
        ) {
            return Ok(shape);
        }
    }
    unreachable!("generator stack always contains the code conv");
}

pub fn build_generator(low_rate_hz: f64, seed: u64) -> Result<Network<f32>, CganError> {
    let width = width_for_rate(low_rate_hz)?;
    let specs = generator_specs(low_rate_hz)?;
    Ok(Network::new(vec![2, FEATURE_ROWS, width], specs, seed)?)
}

/// Discriminator stack: the shared conv/ReLU/pool trunk, one extra pooling
/// stage to keep the dense head small, then dense to a single sigmoid
/// probability. Input is the conditioned high-rate tensor [2, 4, 320].
pub fn discriminator_specs() -> Vec<LayerSpec> {
    let conv = |in_c: usize, out_c: usize| LayerSpec::Conv2d {
        in_channels: in_c,
        out_channels: out_c,
        kernel: (1, 3),
        padding: Padding::Same,
    };
    vec![
        conv(2, 8),
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: (1, 2) },
        conv(8, 16),
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { pool: (1, 2) },
        LayerSpec::MaxPool2d { pool: (1, 4) },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 16 * FEATURE_ROWS * (HIGH_WIDTH / 16),
            out_features: 64,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            in_features: 64,
            out_features: 1,
        },
        LayerSpec::Sigmoid,
    ]
}

pub fn build_discriminator(seed: u64) -> Result<Network<f32>, CganError> {
    Ok(Network::new(
        vec![2, FEATURE_ROWS, HIGH_WIDTH],
        discriminator_specs(),
        seed,
    )?)
}

#[derive(Debug, Clone)]
pub struct CganConfig {
    pub low_rate_hz: f64,
    pub minibatch: usize,
    pub epochs: usize,
    /// Discriminator steps per generator step.
    pub k_discriminator_steps: usize,
    /// Tolerance on |D - 0.5| for the epoch-wide equilibrium stop.
    pub equilibrium_eps: f64,
    pub seed: u64,
    pub d_learning_rate: f64,
    pub g_learning_rate: f64,
    pub g_momentum: f64,
    /// Optional L1 reconstruction term for the generator; 0 disables it and
    /// keeps training purely adversarial.
    pub aux_l1_weight: f64,
    pub non_saturating_g_loss: bool,
    /// Std of the fresh Gaussian noise added to every discriminator input
    /// (real and fake alike). Blurs the hard min-max extremes that would
    /// otherwise make real tensors trivially separable; 0 disables.
    pub instance_noise_std: f64,
    /// Final noise std, reached by linear decay over the epoch budget.
    /// Strong early noise keeps the game balanced; the decay lets the
    /// discriminator eventually see class-scale structure, which is what
    /// pressures the generator into label-consistent output.
    pub instance_noise_floor: f64,
    /// When set, training subsamples this many pairs (seed-deterministic).
    pub pair_cap: Option<usize>,
}

impl CganConfig {
    /// The reference recipe: 256-tensor minibatches, 1,000 epochs, k = 1.
    pub fn reference(low_rate_hz: f64, seed: u64) -> Self {
        Self {
            low_rate_hz,
            minibatch: 256,
            epochs: 1000,
            k_discriminator_steps: 1,
            equilibrium_eps: 0.02,
            seed,
            // Balanced empirically on the pinned toy run: the discriminator
            // must not outpace the small generator.
            d_learning_rate: 5e-5,
            g_learning_rate: 2e-2,
            g_momentum: 0.9,
            aux_l1_weight: 0.0,
            non_saturating_g_loss: true,
            instance_noise_std: 0.2,
            instance_noise_floor: 0.05,
            pair_cap: None,
        }
    }
}

/// A high-rate tensor and its decimated twin, same label and noise draw.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub high: PreambleTensor,
    pub low: PreambleTensor,
}

/// Pairs up the matching records, rejecting any mismatch in identity or
/// shape before training starts.
pub fn pair_training_tensors(
    high: &[PreambleRecord],
    low: &[PreambleRecord],
    low_rate_hz: f64,
) -> Result<Vec<TrainingPair>, CganError> {
    if high.len() != low.len() {
        return Err(CganError::BadPair {
            index: 0,
            detail: format!("{} high-rate vs {} low-rate records", high.len(), low.len()),
        });
    }
    let low_width = width_for_rate(low_rate_hz)?;
    high.iter()
        .zip(low)
        .enumerate()
        .map(|(index, (h, l))| {
            if h.emitter_id != l.emitter_id
                || h.snr_db != l.snr_db
                || h.realization != l.realization
            {
                return Err(CganError::BadPair {
                    index,
                    detail: "records are not decimated twins (identity fields differ)".into(),
                });
            }
            if l.sequence.len() != low_width || h.sequence.len() != HIGH_WIDTH {
                return Err(CganError::BadPair {
                    index,
                    detail: format!(
                        "lengths {}/{} do not match widths {}/{}",
                        h.sequence.len(),
                        l.sequence.len(),
                        HIGH_WIDTH,
                        low_width
                    ),
                });
            }
            Ok(TrainingPair {
                high: crate::tensorize::to_tensor(h)?,
                low: crate::tensorize::to_tensor(l)?,
            })
        })
        .collect()
}

/// Per-epoch training curve entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_d_real: f64,
    pub mean_d_fake: f64,
    pub early_stop: bool,
}

/// The trained generator together with the conditioning path used during
/// training.
#[derive(Debug, Clone)]
pub struct TrainedGenerator {
    pub network: Network<f32>,
    pub low_rate_hz: f64,
    pub embedder: LabelEmbedder,
}

impl TrainedGenerator {
    /// Tensorize -> attach label channel -> generator forward -> strip the
    /// conditioning channel. Returns the 4 x 320 x 1 tensor for the SEI
    /// classifier.
    pub fn upsample(
        &mut self,
        record: &PreambleRecord,
        label: u16,
    ) -> Result<PreambleTensor, CganError> {
        if record.sequence.fs_hz() != self.low_rate_hz {
            return Err(CganError::WrongInputRate {
                expected: self.low_rate_hz,
                got: record.sequence.fs_hz(),
            });
        }
        let tensor = crate::tensorize::to_tensor(record)?;
        let channel = self.embedder.label_channel(label, tensor.width())?;
        let conditioned = attach_label(&tensor, &channel)?;
        let input = conditioned.nn_input().map(|v| v as f32);
        let output = self.network.infer(&input)?;
        let generated =
            PreambleTensor::from_nn_output(&output.map(f64::from), label, record.snr_db)?;
        let mut stripped = strip_label_channel(&generated)?;
        // The classifier contract expects column-normalized tensors; sigmoid
        // outputs land in [0, 1] but not on the exact per-column extremes.
        crate::tensorize::min_max_normalize_columns(&mut stripped.data);
        Ok(stripped)
    }
}

/// Everything `train_cgan` produces.
#[derive(Debug)]
pub struct CganOutcome {
    pub generator: TrainedGenerator,
    pub discriminator: Network<f32>,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Online-augmentation source: pre-noise high-rate sequences aligned with
/// the selected training pairs, re-noised freshly every minibatch.
#[derive(Debug, Clone)]
struct CganAugment {
    clean: Vec<crate::signal::ComplexSequence>,
    snr_range_db: (f64, f64),
    factor: usize,
}

/// Resumable trainer. One instance owns its networks exclusively.
pub struct CganTrainer {
    cfg: CganConfig,
    generator: Network<f32>,
    discriminator: Network<f32>,
    g_opt: SgdOptimizer<f32>,
    d_opt: AdamOptimizer<f32>,
    embedder: LabelEmbedder,
    real_inputs: Vec<TensorND<f32>>,
    gen_inputs: Vec<TensorND<f32>>,
    labels: Vec<u16>,
    augment: Option<CganAugment>,
    next_epoch: usize,
    log: Vec<EpochLog>,
    stopped_early: bool,
}

/// Discriminator input for a generated sample: the generator's feature
/// channel plus the canonical conditioning channel, mirroring the real
/// side where the label channel also comes from the embedder.
fn compose_fake(fake: &TensorND<f32>, real_input: &TensorND<f32>) -> TensorND<f32> {
    let plane = FEATURE_ROWS * HIGH_WIDTH;
    let mut input = fake.clone();
    input.data_mut()[plane..2 * plane].copy_from_slice(&real_input.data()[plane..2 * plane]);
    input
}

impl CganTrainer {
    pub fn new(
        pairs: &[TrainingPair],
        num_labels: usize,
        cfg: &CganConfig,
    ) -> Result<Self, CganError> {
        if pairs.is_empty() {
            return Err(CganError::EmptyTrainingSet);
        }
        let selected: Vec<usize> = match cfg.pair_cap {
            Some(cap) if cap < pairs.len() => {
                let mut idx: Vec<usize> = (0..pairs.len()).collect();
                idx.shuffle(&mut rng_for(cfg.seed, "pair-cap", &[]));
                idx.truncate(cap);
                idx
            }
            _ => (0..pairs.len()).collect(),
        };
        if cfg.minibatch > selected.len() {
            return Err(CganError::MinibatchTooLarge {
                minibatch: cfg.minibatch,
                pairs: selected.len(),
            });
        }

        let embedder = LabelEmbedder::new(num_labels, derive_seed(cfg.seed, "embedder", &[]));
        let low_width = width_for_rate(cfg.low_rate_hz)?;

        // The conditioning channels are frozen, so the network inputs can be
        // materialized once.
        let mut real_inputs = Vec::with_capacity(selected.len());
        let mut gen_inputs = Vec::with_capacity(selected.len());
        let mut labels = Vec::with_capacity(selected.len());
        for &i in &selected {
            let pair = &pairs[i];
            if pair.low.width() != low_width {
                return Err(CganError::BadPair {
                    index: i,
                    detail: format!(
                        "low tensor width {} does not match rate {}",
                        pair.low.width(),
                        cfg.low_rate_hz
                    ),
                });
            }
            let high_chan = embedder.label_channel(pair.high.label, HIGH_WIDTH)?;
            let low_chan = embedder.label_channel(pair.low.label, low_width)?;
            real_inputs
                .push(attach_label(&pair.high, &high_chan)?.nn_input().map(|v| v as f32));
            gen_inputs
                .push(attach_label(&pair.low, &low_chan)?.nn_input().map(|v| v as f32));
            labels.push(pair.high.label);
        }

        let generator = build_generator(cfg.low_rate_hz, derive_seed(cfg.seed, "generator", &[]))?;
        let discriminator = build_discriminator(derive_seed(cfg.seed, "discriminator", &[]))?;
        let g_opt = SgdOptimizer::for_network(&generator, cfg.g_learning_rate, cfg.g_momentum);
        let d_opt = AdamOptimizer::for_network(
            &discriminator,
            AdamHyper {
                lr: cfg.d_learning_rate,
                ..Default::default()
            },
        );
        Ok(Self {
            cfg: cfg.clone(),
            generator,
            discriminator,
            g_opt,
            d_opt,
            embedder,
            real_inputs,
            gen_inputs,
            labels,
            augment: None,
            next_epoch: 0,
            log: Vec::new(),
            stopped_early: false,
        })
    }

    /// Enables online augmentation: each minibatch rebuilds its pairs from
    /// pre-noise records (matched per emitter) with fresh like-filtered
    /// noise at an SNR drawn from `snr_range_db`, then re-decimates, so the
    /// decimated-twin pairing is preserved.
    pub fn enable_augment(
        &mut self,
        clean_records: &[PreambleRecord],
        snr_range_db: (f64, f64),
    ) -> Result<(), CganError> {
        let factor = (crate::signal::HIGH_RATE_HZ / self.cfg.low_rate_hz).round() as usize;
        let mut clean = Vec::with_capacity(self.labels.len());
        for (pos, &label) in self.labels.iter().enumerate() {
            let candidates: Vec<&PreambleRecord> = clean_records
                .iter()
                .filter(|r| r.emitter_id == label)
                .collect();
            if candidates.is_empty() {
                return Err(CganError::BadPair {
                    index: pos,
                    detail: format!("no pre-noise record for emitter {label}"),
                });
            }
            clean.push(candidates[pos % candidates.len()].sequence.clone());
        }
        self.augment = Some(CganAugment {
            clean,
            snr_range_db,
            factor,
        });
        Ok(())
    }

    /// Freshly augmented (real, generator) inputs for one batch position.
    fn augmented_inputs(
        &self,
        pos: usize,
        seed: u64,
    ) -> Result<(TensorND<f32>, TensorND<f32>), CganError> {
        let aug = self.augment.as_ref().expect("augment enabled");
        let noisy = crate::spectro::online_augment(
            std::slice::from_ref(&aug.clean[pos]),
            aug.snr_range_db,
            seed,
        )
        .map_err(|e| CganError::BadPair {
            index: pos,
            detail: e.to_string(),
        })?
        .pop()
        .expect("one sequence in, one out");
        let low_seq = crate::filter::decimate(&noisy, aug.factor).map_err(|e| CganError::BadPair {
            index: pos,
            detail: e.to_string(),
        })?;
        let label = self.labels[pos];
        let high_rec = PreambleRecord {
            emitter_id: label,
            snr_db: f64::INFINITY,
            realization: 0,
            sequence: noisy,
        };
        let low_rec = PreambleRecord {
            sequence: low_seq,
            ..high_rec.clone()
        };
        let high = crate::tensorize::to_tensor(&high_rec)?;
        let low = crate::tensorize::to_tensor(&low_rec)?;
        let high_chan = self.embedder.label_channel(label, HIGH_WIDTH)?;
        let low_chan = self.embedder.label_channel(label, low.width())?;
        Ok((
            attach_label(&high, &high_chan)?.nn_input().map(|v| v as f32),
            attach_label(&low, &low_chan)?.nn_input().map(|v| v as f32),
        ))
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    pub fn next_epoch(&self) -> usize {
        self.next_epoch
    }

    pub fn is_finished(&self) -> bool {
        self.stopped_early || self.next_epoch >= self.cfg.epochs
    }

    /// Runs one epoch: per minibatch, k discriminator updates then one
    /// generator update. Returns the epoch log entry.
    pub fn run_epoch(&mut self) -> Result<EpochLog, CganError> {
        let epoch = self.next_epoch;
        let n = self.real_inputs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(self.cfg.seed, "epoch-order", &[epoch as u64]));

        let loss_cfg = GanLossConfig {
            non_saturating: self.cfg.non_saturating_g_loss,
        };
        // Linear decay from the initial std to the floor across the budget.
        let progress = if self.cfg.epochs > 1 {
            epoch as f64 / (self.cfg.epochs - 1) as f64
        } else {
            1.0
        };
        let sigma = (self.cfg.instance_noise_std
            + (self.cfg.instance_noise_floor - self.cfg.instance_noise_std) * progress)
            as f32;
        let mut noise_rng = rng_for(self.cfg.seed, "instance-noise", &[epoch as u64]);
        let mut jitter = |x: &mut TensorND<f32>| {
            if sigma > 0.0 {
                for v in x.data_mut() {
                    let w: f32 = rand_distr::Distribution::sample(
                        &rand_distr::StandardNormal,
                        &mut noise_rng,
                    );
                    *v += sigma * w;
                }
            }
        };

        let mut d_loss_sum = 0.0;
        let mut g_loss_sum = 0.0;
        let mut d_real_sum = 0.0;
        let mut d_fake_sum = 0.0;
        let mut d_real_count = 0usize;
        let mut d_fake_count = 0usize;
        let mut batches = 0usize;
        let mut d_out_min = f64::INFINITY;
        let mut d_out_max = f64::NEG_INFINITY;
        let observe = |p: f64, min: &mut f64, max: &mut f64| {
            *min = min.min(p);
            *max = max.max(p);
        };

        for (batch_no, batch) in order.chunks(self.cfg.minibatch).enumerate() {
            // Augmented runs rebuild this minibatch's pairs with fresh noise.
            let aug_inputs: Option<Vec<(TensorND<f32>, TensorND<f32>)>> = match &self.augment {
                Some(_) => Some(
                    batch
                        .iter()
                        .enumerate()
                        .map(|(slot, &i)| {
                            let seed = derive_seed(
                                self.cfg.seed,
                                "gan-augment",
                                &[epoch as u64, batch_no as u64, slot as u64],
                            );
                            self.augmented_inputs(i, seed)
                        })
                        .collect::<Result<_, _>>()?,
                ),
                None => None,
            };

            // k discriminator steps for the current generator.
            for _ in 0..self.cfg.k_discriminator_steps {
                self.discriminator.zero_grads();
                let mut d_real = Vec::with_capacity(batch.len());
                let mut d_fake = Vec::with_capacity(batch.len());
                // Per-sample term of -mean ln D(real); dividing the upstream
                // by the batch size makes the accumulated gradient the batch
                // mean.
                for (slot, &i) in batch.iter().enumerate() {
                    let mut x = match &aug_inputs {
                        Some(v) => v[slot].0.clone(),
                        None => self.real_inputs[i].clone(),
                    };
                    jitter(&mut x);
                    let p = self.discriminator.forward(&x)?.data()[0];
                    let pf = f64::from(p);
                    observe(pf, &mut d_out_min, &mut d_out_max);
                    d_real.push(pf);
                    let grad = gan_losses::<f32>(&[p], &[], loss_cfg).d_grad_real[0];
                    let mut upstream = TensorND::zeros(&[1]);
                    upstream.data_mut()[0] = grad / batch.len() as f32;
                    self.discriminator.backward(&upstream)?;
                }
                for (slot, &i) in batch.iter().enumerate() {
                    let gen_in = match &aug_inputs {
                        Some(v) => &v[slot].1,
                        None => &self.gen_inputs[i],
                    };
                    let fake = self.generator.infer(gen_in)?;
                    let mut x = match &aug_inputs {
                        Some(v) => compose_fake(&fake, &v[slot].0),
                        None => compose_fake(&fake, &self.real_inputs[i]),
                    };
                    jitter(&mut x);
                    let p = self.discriminator.forward(&x)?.data()[0];
                    let pf = f64::from(p);
                    observe(pf, &mut d_out_min, &mut d_out_max);
                    d_fake.push(pf);
                    let grad = gan_losses::<f32>(&[], &[p], loss_cfg).d_grad_fake[0];
                    let mut upstream = TensorND::zeros(&[1]);
                    upstream.data_mut()[0] = grad / batch.len() as f32;
                    self.discriminator.backward(&upstream)?;
                }
                self.d_opt.step(&mut self.discriminator)?;

                let stats = gan_losses::<f64>(&d_real, &d_fake, loss_cfg);
                d_loss_sum += stats.d_loss;
                d_real_sum += d_real.iter().sum::<f64>();
                d_fake_sum += d_fake.iter().sum::<f64>();
                d_real_count += d_real.len();
                d_fake_count += d_fake.len();
            }

            // One generator step against the updated discriminator. Only the
            // feature channel of the generator output feeds the
            // discriminator, so the conditioning channel receives no
            // adversarial gradient.
            self.generator.zero_grads();
            self.discriminator.zero_grads();
            let plane = FEATURE_ROWS * HIGH_WIDTH;
            let mut g_probs = Vec::with_capacity(batch.len());
            for (slot, &i) in batch.iter().enumerate() {
                let gen_in = match &aug_inputs {
                    Some(v) => &v[slot].1,
                    None => &self.gen_inputs[i],
                };
                let fake = self.generator.forward(gen_in)?;
                let mut x = match &aug_inputs {
                    Some(v) => compose_fake(&fake, &v[slot].0),
                    None => compose_fake(&fake, &self.real_inputs[i]),
                };
                jitter(&mut x);
                let p = self.discriminator.forward(&x)?.data()[0];
                let pf = f64::from(p);
                observe(pf, &mut d_out_min, &mut d_out_max);
                g_probs.push(pf);
                let grad = gan_losses::<f32>(&[], &[p], loss_cfg).g_grad_fake[0];
                let mut upstream = TensorND::zeros(&[1]);
                upstream.data_mut()[0] = grad / batch.len() as f32;
                let mut fake_grad = self.discriminator.backward(&upstream)?;
                for v in &mut fake_grad.data_mut()[plane..2 * plane] {
                    *v = 0.0;
                }
                if self.cfg.aux_l1_weight > 0.0 {
                    let w = self.cfg.aux_l1_weight as f32 / (batch.len() * fake.len()) as f32;
                    let target = match &aug_inputs {
                        Some(v) => &v[slot].0,
                        None => &self.real_inputs[i],
                    };
                    for ((g, &f), &t) in fake_grad
                        .data_mut()
                        .iter_mut()
                        .zip(fake.data())
                        .zip(target.data())
                    {
                        *g += w * (f - t).signum();
                    }
                }
                self.generator.backward(&fake_grad)?;
            }
            self.g_opt.step(&mut self.generator)?;
            g_loss_sum += gan_losses::<f64>(&[], &g_probs, loss_cfg).g_loss;
            batches += 1;
        }

        let eps = self.cfg.equilibrium_eps;
        let in_band = (d_out_min - 0.5).abs() < eps && (d_out_max - 0.5).abs() < eps;
        let entry = EpochLog {
            epoch,
            d_loss: d_loss_sum / batches as f64,
            g_loss: g_loss_sum / batches as f64,
            mean_d_real: d_real_sum / d_real_count.max(1) as f64,
            mean_d_fake: d_fake_sum / d_fake_count.max(1) as f64,
            early_stop: in_band,
        };
        self.log.push(entry.clone());
        self.next_epoch += 1;
        if in_band {
            self.stopped_early = true;
        }
        Ok(entry)
    }

    pub fn into_outcome(self) -> CganOutcome {
        CganOutcome {
            generator: TrainedGenerator {
                network: self.generator,
                low_rate_hz: self.cfg.low_rate_hz,
                embedder: self.embedder,
            },
            discriminator: self.discriminator,
            log: self.log,
            stopped_early: self.stopped_early,
        }
    }

    /// Serializes epoch counter, networks, and optimizer state so an
    /// interrupted run resumes to a bit-identical trajectory.
    pub fn save_state(&self, path: &Path) -> Result<(), CganError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"SEIS");
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&(self.next_epoch as u64).to_le_bytes());
        buf.push(u8::from(self.stopped_early));

        let write_f32s = |buf: &mut Vec<u8>, data: &[f32]| {
            buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        };
        for net in [&self.generator, &self.discriminator] {
            for layer in net.layers() {
                write_f32s(&mut buf, layer.weights.data());
                write_f32s(&mut buf, layer.bias.data());
            }
        }
        for v in self.g_opt.snapshot() {
            write_f32s(&mut buf, &v);
        }
        let (step, moments) = self.d_opt.snapshot();
        buf.extend_from_slice(&step.to_le_bytes());
        for v in moments {
            write_f32s(&mut buf, &v);
        }
        buf.extend_from_slice(&(self.log.len() as u64).to_le_bytes());
        for e in &self.log {
            buf.extend_from_slice(&(e.epoch as u64).to_le_bytes());
            for v in [e.d_loss, e.g_loss, e.mean_d_real, e.mean_d_fake] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.push(u8::from(e.early_stop));
        }
        fs::write(path, buf).map_err(|source| CganError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn restore_state(&mut self, path: &Path) -> Result<(), CganError> {
        let bytes = fs::read(path).map_err(|source| CganError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let bad = |detail: &str| CganError::BadState {
            path: path.display().to_string(),
            detail: detail.into(),
        };
        let mut cur = 0usize;
        let take = |cur: &mut usize, n: usize| -> Option<&[u8]> {
            if *cur + n > bytes.len() {
                return None;
            }
            let s = &bytes[*cur..*cur + n];
            *cur += n;
            Some(s)
        };
        if take(&mut cur, 4) != Some(b"SEIS") {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(take(&mut cur, 2).ok_or_else(|| bad("truncated"))?.try_into().unwrap());
        if version != 1 {
            return Err(bad("unsupported version"));
        }
        self.next_epoch =
            u64::from_le_bytes(take(&mut cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap())
                as usize;
        self.stopped_early = take(&mut cur, 1).ok_or_else(|| bad("truncated"))?[0] != 0;

        let read_f32s = |cur: &mut usize, expect: usize| -> Result<Vec<f32>, CganError> {
            let len = u64::from_le_bytes(
                take(cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap(),
            ) as usize;
            if len != expect {
                return Err(bad("tensor length mismatch"));
            }
            let raw = take(cur, 4 * len).ok_or_else(|| bad("truncated"))?;
            Ok(raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        for net in [&mut self.generator, &mut self.discriminator] {
            for layer in net.layers_mut() {
                let w = read_f32s(&mut cur, layer.weights.len())?;
                layer.weights.data_mut().copy_from_slice(&w);
                let b = read_f32s(&mut cur, layer.bias.len())?;
                layer.bias.data_mut().copy_from_slice(&b);
            }
        }
        let g_snap = self.g_opt.snapshot();
        let mut g_bufs = Vec::with_capacity(g_snap.len());
        for v in &g_snap {
            g_bufs.push(read_f32s(&mut cur, v.len())?);
        }
        self.g_opt.restore(&g_bufs).map_err(CganError::Nn)?;
        let step = u64::from_le_bytes(
            take(&mut cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap(),
        );
        let (_, d_snap) = self.d_opt.snapshot();
        let mut d_bufs = Vec::with_capacity(d_snap.len());
        for v in &d_snap {
            d_bufs.push(read_f32s(&mut cur, v.len())?);
        }
        self.d_opt.restore(step, &d_bufs).map_err(CganError::Nn)?;

        let log_len = u64::from_le_bytes(
            take(&mut cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap(),
        ) as usize;
        self.log.clear();
        for _ in 0..log_len {
            let epoch = u64::from_le_bytes(
                take(&mut cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap(),
            ) as usize;
            let mut vals = [0.0f64; 4];
            for v in &mut vals {
                *v = f64::from_le_bytes(
                    take(&mut cur, 8).ok_or_else(|| bad("truncated"))?.try_into().unwrap(),
                );
            }
            let early_stop = take(&mut cur, 1).ok_or_else(|| bad("truncated"))?[0] != 0;
            self.log.push(EpochLog {
                epoch,
                d_loss: vals[0],
                g_loss: vals[1],
                mean_d_real: vals[2],
                mean_d_fake: vals[3],
                early_stop,
            });
        }
        Ok(())
    }
}

/// Full training run: alternating optimization until the epoch budget or
/// the equilibrium stop fires.
pub fn train_cgan(
    pairs: &[TrainingPair],
    num_labels: usize,
    cfg: &CganConfig,
) -> Result<CganOutcome, CganError> {
    let mut trainer = CganTrainer::new(pairs, num_labels, cfg)?;
    while !trainer.is_finished() {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_outcome())
}

/// Training-curve CSV: epoch, d_loss, g_loss, mean_d_real, mean_d_fake,
/// early_stop. `header_comments` lines are prefixed with `#`.
pub fn write_training_log(
    path: &Path,
    log: &[EpochLog],
    header_comments: &[String],
) -> Result<(), CganError> {
    let mut text = String::new();
    for c in header_comments {
        text.push_str(&format!("# {c}\n"));
    }
    text.push_str("epoch,d_loss,g_loss,mean_d_real,mean_d_fake,early_stop\n");
    for e in log {
        text.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            e.epoch + 1,
            e.d_loss,
            e.g_loss,
            e.mean_d_real,
            e.mean_d_fake,
            u8::from(e.early_stop)
        ));
    }
    fs::write(path, text).map_err(|source| CganError::Io {
        path: path.display().to_string(),
        source,
    })
}
