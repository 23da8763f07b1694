//! FIR low-pass design, centered convolution, and decimation.

use num_complex::Complex64;

use crate::signal::{ComplexSequence, SignalError};

/// Taps used by the decimation anti-alias stage and the like-filtered noise.
pub const ANTI_ALIAS_TAPS: usize = 81;

/// Hamming-windowed sinc low-pass with unity DC gain.
///
/// `cutoff` is the single-sided cutoff in cycles/sample, in (0, 0.5).
/// `num_taps` must be odd so the filter is linear phase with integer delay.
pub fn design_lowpass(num_taps: usize, cutoff: f64) -> Vec<f64> {
    assert!(num_taps % 2 == 1, "tap count must be odd");
    assert!(cutoff > 0.0 && cutoff < 0.5, "cutoff must be in (0, 0.5)");
    let center = (num_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|i| {
            let x = i as f64 - center;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * x).sin() / (std::f64::consts::PI * x)
            };
            let window = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (num_taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Centered ("same") convolution with real taps and zero-padded edges.
/// Linear phase is compensated, so output sample n is aligned with input n.
pub fn convolve_same(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let center = (taps.len() - 1) / 2;
    let n = signal.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &t) in taps.iter().enumerate() {
            let k = i as isize + j as isize - center as isize;
            if k >= 0 && (k as usize) < n {
                acc += signal[k as usize] * t;
            }
        }
        *slot = acc;
    }
    out
}

/// Keeps every `factor`-th sample starting at index 0, without filtering.
pub fn pick_every(sig: &ComplexSequence, factor: usize) -> Result<ComplexSequence, SignalError> {
    if factor == 0 {
        return Err(SignalError::ZeroFactor);
    }
    if sig.len() % factor != 0 {
        return Err(SignalError::FactorMismatch {
            factor,
            len: sig.len(),
        });
    }
    if factor == 1 {
        return Ok(sig.clone());
    }
    let kept: Vec<Complex64> = sig.samples().iter().step_by(factor).copied().collect();
    ComplexSequence::new(kept, sig.fs_hz() / factor as f64)
}

/// Anti-alias low-pass (cutoff 0.45 of the output Nyquist band) followed by
/// sample picking. `factor` must divide the sequence length; factor 1 is the
/// identity.
pub fn decimate(sig: &ComplexSequence, factor: usize) -> Result<ComplexSequence, SignalError> {
    if factor == 0 {
        return Err(SignalError::ZeroFactor);
    }
    if sig.len() % factor != 0 {
        return Err(SignalError::FactorMismatch {
            factor,
            len: sig.len(),
        });
    }
    if factor == 1 {
        return Ok(sig.clone());
    }
    let taps = design_lowpass(ANTI_ALIAS_TAPS, 0.45 / factor as f64);
    let filtered = convolve_same(sig.samples(), &taps);
    let kept: Vec<Complex64> = filtered.into_iter().step_by(factor).collect();
    ComplexSequence::new(kept, sig.fs_hz() / factor as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn random_sequence(len: usize, tag: u64) -> ComplexSequence {
        let mut rng = rng_for(tag, "filter-test", &[]);
        let samples = (0..len)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ComplexSequence::new(samples, 20e6).unwrap()
    }

    #[test]
    fn lowpass_has_unity_dc_gain() {
        let taps = design_lowpass(81, 0.2);
        let sum: f64 = taps.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lowpass_is_symmetric() {
        let taps = design_lowpass(81, 0.1125);
        for i in 0..taps.len() / 2 {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn lowpass_attenuates_stopband_tone() {
        // Tone at 0.4 cycles/sample through a 0.1125 cutoff filter.
        let taps = design_lowpass(81, 0.1125);
        let tone: Vec<Complex64> = (0..400)
            .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 0.4 * n as f64))
            .collect();
        let out = convolve_same(&tone, &taps);
        let mid_power: f64 = out[100..300].iter().map(|c| c.norm_sqr()).sum::<f64>() / 200.0;
        assert!(mid_power < 1e-6, "stopband power {mid_power}");
    }

    #[test]
    fn lowpass_passes_passband_tone() {
        let taps = design_lowpass(81, 0.2);
        let tone: Vec<Complex64> = (0..400)
            .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 0.05 * n as f64))
            .collect();
        let out = convolve_same(&tone, &taps);
        let mid_power: f64 = out[100..300].iter().map(|c| c.norm_sqr()).sum::<f64>() / 200.0;
        assert!((mid_power - 1.0).abs() < 1e-3, "passband power {mid_power}");
    }

    #[test]
    fn decimate_lengths_match_rates() {
        let sig = random_sequence(320, 1);
        for (v, want_len, want_fs) in [(2usize, 160usize, 10e6), (4, 80, 5e6), (8, 40, 2.5e6)] {
            let d = decimate(&sig, v).unwrap();
            assert_eq!(d.len(), want_len);
            assert_eq!(d.fs_hz(), want_fs);
        }
    }

    #[test]
    fn decimate_by_one_is_identity() {
        let sig = random_sequence(64, 2);
        let d = decimate(&sig, 1).unwrap();
        assert_eq!(d, sig);
    }

    #[test]
    fn decimate_rejects_non_dividing_factor() {
        let sig = random_sequence(320, 3);
        assert!(matches!(
            decimate(&sig, 3),
            Err(SignalError::FactorMismatch { factor: 3, len: 320 })
        ));
    }

    #[test]
    fn pick_every_composes_multiplicatively() {
        // The filter-free picking stage satisfies pick(v1*v2) = pick(v2) o pick(v1).
        let sig = random_sequence(320, 4);
        let once = pick_every(&sig, 8).unwrap();
        let twice = pick_every(&pick_every(&sig, 2).unwrap(), 4).unwrap();
        assert_eq!(once, twice);
    }
}
