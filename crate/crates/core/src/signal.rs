//! Complex baseband sequences and rate constants.

use num_complex::Complex64;
use thiserror::Error;

/// Target (collection) sampling rate of the high-rate preambles, Hz.
pub const HIGH_RATE_HZ: f64 = 20e6;

/// Subcarrier spacing of the 802.11a OFDM construction, Hz.
pub const SUBCARRIER_SPACING_HZ: f64 = 312_500.0;

/// Occupied bandwidth of the 52-subcarrier preamble, Hz. Band-limited noise
/// and anti-alias stages use half of this as the single-sided cutoff.
pub const OCCUPIED_BANDWIDTH_HZ: f64 = 52.0 * SUBCARRIER_SPACING_HZ;

/// Sampling rates the synthesizer supports, Hz.
pub const SUPPORTED_RATES_HZ: [f64; 4] = [2.5e6, 5e6, 10e6, 20e6];

/// Lower collection rates under study, Hz.
pub const LOW_RATES_HZ: [f64; 3] = [2.5e6, 5e6, 10e6];

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("sequence must be nonempty")]
    Empty,

    #[error("sampling rate must be positive, got {0} Hz")]
    NonPositiveRate(f64),

    #[error("unsupported sampling rate {0} Hz (expected one of 2.5, 5, 10, 20 MHz)")]
    UnsupportedRate(f64),

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("decimation factor {factor} does not divide sequence length {len}")]
    FactorMismatch { factor: usize, len: usize },

    #[error("decimation factor must be >= 1")]
    ZeroFactor,
}

/// Ordered complex baseband samples with an attached sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSequence {
    samples: Vec<Complex64>,
    fs_hz: f64,
}

impl ComplexSequence {
    pub fn new(samples: Vec<Complex64>, fs_hz: f64) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        if !(fs_hz > 0.0) {
            return Err(SignalError::NonPositiveRate(fs_hz));
        }
        Ok(Self { samples, fs_hz })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs_hz
    }

    /// Mean of |x|^2 over the sequence, accumulated in f64.
    pub fn mean_power(&self) -> f64 {
        let sum: f64 = self.samples.iter().map(|s| s.norm_sqr()).sum();
        sum / self.samples.len() as f64
    }

    /// Index of the first non-finite sample, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.samples
            .iter()
            .position(|s| !s.re.is_finite() || !s.im.is_finite())
    }

    /// Scaled copy with unit mean power. A zero signal is returned unchanged.
    pub fn normalized_to_unit_power(&self) -> Self {
        let p = self.mean_power();
        if p <= 0.0 {
            return self.clone();
        }
        let g = 1.0 / p.sqrt();
        Self {
            samples: self.samples.iter().map(|s| s * g).collect(),
            fs_hz: self.fs_hz,
        }
    }

    /// Replaces the samples, keeping the rate. Length must stay nonzero.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self, SignalError> {
        Self::new(samples, self.fs_hz)
    }
}
