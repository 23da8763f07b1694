//! Channel-independent spectrograms and online noise augmentation.
//!
//! The spectrogram width follows the chirp-spread-spectrum sizing rule
//! M = (8 * (2^SF / B) * F_L - N) / R + 1 (floored when fractional), where
//! the spreading factor stays fixed at 7 and the sampling rate drives the
//! width. The channel-independent construction takes the log-magnitude
//! ratio of adjacent STFT columns, which cancels any constant complex gain
//! and leaves an N x (M-1) matrix.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::noise::add_awgn;
use crate::seed::derive_seed;
use crate::signal::{ComplexSequence, SignalError, HIGH_RATE_HZ, OCCUPIED_BANDWIDTH_HZ};

#[derive(Debug, Error)]
pub enum SpectroError {
    #[error("invalid spectrogram config: {0}")]
    BadConfig(String),

    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    SignalTooShort { len: usize, window: usize },

    #[error("width formula yields non-positive M for this config")]
    NonPositiveWidth,

    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy)]
pub struct SpectroConfig {
    /// STFT window length N.
    pub window_len: usize,
    /// Hop size R.
    pub hop: usize,
    /// Spreading factor; fixed at 7 across all sampling rates.
    pub spreading_factor: u32,
    /// Bandwidth B, Hz.
    pub bandwidth_hz: f64,
    /// Sampling rate F_L, Hz.
    pub sample_rate_hz: f64,
}

impl SpectroConfig {
    /// Defaults for an 802.11a run at `sample_rate_hz`: N = 64, R = 32,
    /// SF = 7, and B scaled from the 20 MHz occupied bandwidth.
    pub fn for_wifi_rate(sample_rate_hz: f64) -> Self {
        Self {
            window_len: 64,
            hop: 32,
            spreading_factor: 7,
            bandwidth_hz: OCCUPIED_BANDWIDTH_HZ * sample_rate_hz / HIGH_RATE_HZ,
            sample_rate_hz,
        }
    }

    fn validate(&self) -> Result<(), SpectroError> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(SpectroError::BadConfig(
                "window and hop must be positive".into(),
            ));
        }
        if self.window_len % self.hop != 0 {
            return Err(SpectroError::BadConfig(format!(
                "window {} must be divisible by hop {} for the overlap scheme",
                self.window_len, self.hop
            )));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.sample_rate_hz > 0.0) {
            return Err(SpectroError::BadConfig(
                "bandwidth and sample rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Nominal signal length in samples implied by the sizing rule.
    pub fn implied_signal_len(&self) -> f64 {
        8.0 * (f64::from(2u32.pow(self.spreading_factor)) / self.bandwidth_hz)
            * self.sample_rate_hz
    }
}

/// Column count M of the spectrogram, floored when fractional.
pub fn spectro_width(cfg: &SpectroConfig) -> Result<usize, SpectroError> {
    cfg.validate()?;
    let m = (cfg.implied_signal_len() - cfg.window_len as f64) / cfg.hop as f64 + 1.0;
    if m < 1.0 {
        return Err(SpectroError::NonPositiveWidth);
    }
    Ok(m.floor() as usize)
}

/// N x (M-1) real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Hann-windowed STFT magnitudes: N rows (bins) by `columns` frames.
pub fn stft_magnitudes(
    sig: &ComplexSequence,
    cfg: &SpectroConfig,
    columns: usize,
) -> Result<Vec<Vec<f64>>, SpectroError> {
    let n = cfg.window_len;
    if sig.len() < n {
        return Err(SpectroError::SignalTooShort {
            len: sig.len(),
            window: n,
        });
    }
    let window = hann(n);
    let samples = sig.samples();
    let mut frames = Vec::with_capacity(columns);
    for m in 0..columns {
        let start = m * cfg.hop;
        if start + n > samples.len() {
            return Err(SpectroError::SignalTooShort {
                len: samples.len(),
                window: start + n,
            });
        }
        let segment: Vec<Complex64> = (0..n).map(|i| samples[start + i] * window[i]).collect();
        let mut mags = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in segment.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                acc += v * Complex64::from_polar(1.0, phase);
            }
            mags.push(acc.norm());
        }
        frames.push(mags);
    }
    Ok(frames)
}

/// Log-magnitude ratio of adjacent STFT columns: constant complex gains
/// cancel, leaving N x (M-1) channel-independent features.
pub fn channel_independent_spectrogram(
    sig: &ComplexSequence,
    cfg: &SpectroConfig,
) -> Result<Spectrogram, SpectroError> {
    let m = spectro_width(cfg)?;
    if m < 2 {
        return Err(SpectroError::NonPositiveWidth);
    }
    let frames = stft_magnitudes(sig, cfg, m)?;
    let n = cfg.window_len;
    let cols = m - 1;
    let mut data = vec![0.0f64; n * cols];
    const FLOOR: f64 = 1e-30;
    for k in 0..n {
        for c in 0..cols {
            let a = frames[c][k].max(FLOOR);
            let b = frames[c + 1][k].max(FLOOR);
            data[k * cols + c] = b.ln() - a.ln();
        }
    }
    Ok(Spectrogram {
        rows: n,
        cols,
        data,
    })
}

/// Fresh like-filtered noise applied to a minibatch of sequences. The
/// input is untouched; SNRs are drawn uniformly from `snr_range_db` with
/// per-item sub-seeds, so distinct seeds (for example per epoch) give
/// distinct noise.
pub fn online_augment(
    minibatch: &[ComplexSequence],
    snr_range_db: (f64, f64),
    seed: u64,
) -> Result<Vec<ComplexSequence>, SignalError> {
    let (lo, hi) = snr_range_db;
    minibatch
        .iter()
        .enumerate()
        .map(|(i, sig)| {
            let item_seed = derive_seed(seed, "augment", &[i as u64]);
            let snr = if lo == hi {
                lo
            } else {
                let mut rng = crate::seed::rng_for(seed, "augment-snr", &[i as u64]);
                rng.random_range(lo..hi)
            };
            add_awgn(sig, snr, item_seed)
        })
        .collect()
}

/// Noisy signals a model sees in one pass of online-augmented training:
/// steps x minibatch size x noise realizations.
pub fn signals_seen_per_pass(steps: usize, minibatch: usize, realizations: usize) -> usize {
    steps * minibatch * realizations
}
