//! IEEE 802.11a preamble synthesis.
//!
//! The preamble is the 16 us training prefix of an 802.11a frame: a short
//! training field (10 repetitions of a 0.8 us symbol built on 12 subcarriers)
//! followed by a long training field (1.6 us guard + two 3.2 us symbols on
//! 52 subcarriers). Both fields are evaluated directly as truncated Fourier
//! series at the requested sampling instants, so any supported rate yields
//! the same underlying continuous waveform. A rectangular symbol window is
//! used; the short field is therefore exactly periodic with period 0.8 us.

use num_complex::Complex64;

use crate::signal::{ComplexSequence, SignalError, SUBCARRIER_SPACING_HZ, SUPPORTED_RATES_HZ};

/// Nonzero short-training subcarriers: (index, I sign, Q sign), each scaled
/// by sqrt(13/6) so the symbol power matches the 52-carrier long symbol.
const SHORT_CARRIERS: [(i32, f64, f64); 12] = [
    (-24, 1.0, 1.0),
    (-20, -1.0, -1.0),
    (-16, 1.0, 1.0),
    (-12, -1.0, -1.0),
    (-8, -1.0, -1.0),
    (-4, 1.0, 1.0),
    (4, -1.0, -1.0),
    (8, -1.0, -1.0),
    (12, 1.0, 1.0),
    (16, 1.0, 1.0),
    (20, 1.0, 1.0),
    (24, 1.0, 1.0),
];

/// Long-training subcarrier values for indices -26..=26 (index 0 is null).
const LONG_CARRIERS: [i32; 53] = [
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, // -26..-1
    0, // DC
    1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1, // 1..26
];

const FIELD_DURATION_S: f64 = 8e-6;
const LONG_GUARD_S: f64 = 1.6e-6;
const IFFT_SCALE: f64 = 1.0 / 64.0;

fn short_symbol_at(t: f64) -> Complex64 {
    let amp = (13.0f64 / 6.0).sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    for &(k, re, im) in &SHORT_CARRIERS {
        let phase = 2.0 * std::f64::consts::PI * f64::from(k) * SUBCARRIER_SPACING_HZ * t;
        acc += Complex64::new(amp * re, amp * im) * Complex64::from_polar(1.0, phase);
    }
    acc * IFFT_SCALE
}

fn long_symbol_at(t: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v) in LONG_CARRIERS.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let k = i as i32 - 26;
        let phase = 2.0 * std::f64::consts::PI * f64::from(k) * SUBCARRIER_SPACING_HZ * t;
        acc += Complex64::new(f64::from(v), 0.0) * Complex64::from_polar(1.0, phase);
    }
    acc * IFFT_SCALE
}

/// Synthesizes the clean short+long training preamble sampled at `fs_hz`.
///
/// At 20 MHz this yields exactly 320 samples; lower supported rates sample
/// the same continuous waveform, yielding 160/80/40 samples.
pub fn synth_clean_preamble(fs_hz: f64) -> Result<ComplexSequence, SignalError> {
    if !SUPPORTED_RATES_HZ.contains(&fs_hz) {
        return Err(SignalError::UnsupportedRate(fs_hz));
    }
    let field_len = (FIELD_DURATION_S * fs_hz).round() as usize;
    let mut samples = Vec::with_capacity(2 * field_len);
    for n in 0..field_len {
        samples.push(short_symbol_at(n as f64 / fs_hz));
    }
    for n in 0..field_len {
        // The long field starts with a double guard interval: the symbol is
        // shifted so the first 1.6 us is its cyclic tail.
        let t = n as f64 / fs_hz - LONG_GUARD_S;
        samples.push(long_symbol_at(t));
    }
    ComplexSequence::new(samples, fs_hz)
}
