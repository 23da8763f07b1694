//! Band-limited AWGN at controlled SNR.
//!
//! Noise is drawn as white complex Gaussian, passed through the same
//! low-pass used by the decimation anti-alias stage (cutoff at the occupied
//! bandwidth), then scaled so the realized signal-to-noise power ratio hits
//! the target exactly. When the occupied bandwidth covers the whole sampled
//! band the filter is skipped; the noise is already "like-filtered".

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::filter::{convolve_same, design_lowpass, ANTI_ALIAS_TAPS};
use crate::seed::rng_for;
use crate::signal::{ComplexSequence, SignalError, OCCUPIED_BANDWIDTH_HZ};

/// Adds like-filtered AWGN so that 10*log10(P_sig / P_noise) = `snr_db`.
///
/// `snr_db = +inf` returns the input unchanged. Deterministic given `seed`.
pub fn add_awgn(
    sig: &ComplexSequence,
    snr_db: f64,
    seed: u64,
) -> Result<ComplexSequence, SignalError> {
    if let Some(idx) = sig.first_non_finite() {
        return Err(SignalError::NonFinite(idx));
    }
    if snr_db == f64::INFINITY {
        return Ok(sig.clone());
    }
    let signal_power = sig.mean_power();
    let target_noise_power = signal_power * 10f64.powf(-snr_db / 10.0);

    let mut rng = rng_for(seed, "awgn", &[]);
    let mut noise: Vec<Complex64> = (0..sig.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();

    let cutoff = (OCCUPIED_BANDWIDTH_HZ / 2.0) / sig.fs_hz();
    if cutoff < 0.5 {
        noise = convolve_same(&noise, &design_lowpass(ANTI_ALIAS_TAPS, cutoff));
    }

    let realized: f64 =
        noise.iter().map(|c| c.norm_sqr()).sum::<f64>() / noise.len() as f64;
    let gain = if realized > 0.0 {
        (target_noise_power / realized).sqrt()
    } else {
        0.0
    };
    let samples: Vec<Complex64> = sig
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n * gain)
        .collect();
    sig.with_samples(samples)
}

/// Measured SNR in dB between a reference signal and its noisy version.
pub fn measured_snr_db(clean: &ComplexSequence, noisy: &ComplexSequence) -> f64 {
    let noise_power: f64 = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(c, n)| (n - c).norm_sqr())
        .sum::<f64>()
        / clean.len() as f64;
    10.0 * (clean.mean_power() / noise_power).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preamble::synth_clean_preamble;
    use rand::Rng;

    #[test]
    fn infinite_snr_is_identity() {
        let sig = synth_clean_preamble(20e6).unwrap();
        let out = add_awgn(&sig, f64::INFINITY, 3).unwrap();
        assert_eq!(out, sig);
    }

    #[test]
    fn nine_db_target_is_hit() {
        let sig = synth_clean_preamble(20e6)
            .unwrap()
            .normalized_to_unit_power();
        let noisy = add_awgn(&sig, 9.0, 17).unwrap();
        let snr = measured_snr_db(&sig, &noisy);
        assert!((8.5..=9.5).contains(&snr), "measured SNR {snr} dB");
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut samples = synth_clean_preamble(20e6).unwrap().samples().to_vec();
        samples[5] = Complex64::new(f64::NAN, 0.0);
        let sig = ComplexSequence::new(samples, 20e6).unwrap();
        assert!(matches!(
            add_awgn(&sig, 12.0, 0),
            Err(SignalError::NonFinite(5))
        ));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let sig = synth_clean_preamble(20e6).unwrap();
        let a = add_awgn(&sig, 15.0, 100).unwrap();
        let b = add_awgn(&sig, 15.0, 100).unwrap();
        let c = add_awgn(&sig, 15.0, 101).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn calibration_over_random_signals() {
        // 100 random length-320 signals: |mean error| < 0.1 dB, max < 0.5 dB.
        let mut rng = crate::seed::rng_for(2024, "snr-calibration", &[]);
        let mut errors = Vec::new();
        for trial in 0..100u64 {
            let samples: Vec<Complex64> = (0..320)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let sig = ComplexSequence::new(samples, 20e6).unwrap();
            let noisy = add_awgn(&sig, 12.0, trial).unwrap();
            errors.push(measured_snr_db(&sig, &noisy) - 12.0);
        }
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        assert!(mean.abs() < 0.1, "mean SNR error {mean} dB");
        assert!(max < 0.5, "max SNR error {max} dB");
    }
}
