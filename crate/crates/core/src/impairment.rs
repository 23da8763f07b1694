//! Per-emitter RF front-end impairments.
//!
//! The impairments stand in for the manufacturing discrepancies that make
//! physical radios distinguishable. They are applied in transmit-chain
//! order: IQ imbalance, DC offset, PA cubic nonlinearity, carrier frequency
//! offset, phase-noise random walk. Each stage is skipped when its parameter
//! is zero, so the all-zero profile reproduces the input bit for bit.

use num_complex::Complex64;

use crate::seed::rng_for;
use crate::signal::ComplexSequence;
use rand_distr::{Distribution, StandardNormal};

/// RF impairment parameters of one virtual emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterProfile {
    pub emitter_id: u16,
    /// Amplitude imbalance between the I and Q arms, dB.
    pub iq_gain_imbalance_db: f64,
    /// Quadrature error of the Q arm, radians.
    pub iq_phase_imbalance_rad: f64,
    /// Residual carrier frequency offset, Hz.
    pub cfo_hz: f64,
    /// Per-sample standard deviation of the phase random walk, radians.
    pub phase_noise_std_rad: f64,
    pub dc_offset: Complex64,
    /// Cubic gain-compression coefficient: x -> x * (1 - a*|x|^2).
    pub pa_gain_compression: f64,
}

impl EmitterProfile {
    /// Profile with every impairment zeroed; applying it is the identity.
    pub fn identity(emitter_id: u16) -> Self {
        Self {
            emitter_id,
            iq_gain_imbalance_db: 0.0,
            iq_phase_imbalance_rad: 0.0,
            cfo_hz: 0.0,
            phase_noise_std_rad: 0.0,
            dc_offset: Complex64::new(0.0, 0.0),
            pa_gain_compression: 0.0,
        }
    }
}

/// Per-impairment multipliers applied on top of the overall spread knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetScales {
    pub spread: f64,
    pub cfo: f64,
    pub iq_gain: f64,
    pub iq_phase: f64,
    pub pa: f64,
    pub phase_noise: f64,
}

impl Default for FleetScales {
    fn default() -> Self {
        Self {
            spread: 1.0,
            cfo: 1.0,
            iq_gain: 1.0,
            iq_phase: 1.0,
            pa: 1.0,
            phase_noise: 1.0,
        }
    }
}

/// The default four-emitter fleet under explicit per-impairment scaling.
pub fn scaled_fleet(scales: FleetScales) -> Vec<EmitterProfile> {
    let cfo_hz = [-2000.0, -700.0, 700.0, 2000.0];
    let gain_db = [0.2, 0.5, 0.8, 1.1];
    let phase_deg: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
    let pa = [0.015, 0.03, 0.045, 0.06];
    let s = scales.spread;
    (0..4)
        .map(|i| EmitterProfile {
            emitter_id: (i + 1) as u16,
            iq_gain_imbalance_db: gain_db[i] * s * scales.iq_gain,
            iq_phase_imbalance_rad: phase_deg[i].to_radians() * s * scales.iq_phase,
            cfo_hz: cfo_hz[i] * s * scales.cfo,
            phase_noise_std_rad: 0.002 * scales.phase_noise,
            dc_offset: Complex64::new(0.0, 0.0),
            pa_gain_compression: pa[i] * s * scales.pa,
        })
        .collect()
}

/// The default four-emitter fleet. `spread` scales every impairment
/// magnitude; 1.0 gives front-end tolerances comparable to real hardware.
pub fn default_fleet(spread: f64) -> Vec<EmitterProfile> {
    scaled_fleet(FleetScales {
        spread,
        ..Default::default()
    })
}

/// Fleet whose only fingerprint is CFO; pairwise fingerprint distance is
/// then the analytic |cfo_i - cfo_j|.
pub fn cfo_only_fleet(spread: f64) -> Vec<EmitterProfile> {
    let cfo_hz = [-2000.0, -700.0, 700.0, 2000.0];
    (0..4)
        .map(|i| EmitterProfile {
            emitter_id: (i + 1) as u16,
            cfo_hz: cfo_hz[i] * spread,
            ..EmitterProfile::identity((i + 1) as u16)
        })
        .collect()
}

/// Applies `profile` to a clean sequence. Deterministic given
/// `(clean, profile, seed)`; length and rate are unchanged.
pub fn apply_impairments(
    clean: &ComplexSequence,
    profile: &EmitterProfile,
    seed: u64,
) -> ComplexSequence {
    let fs = clean.fs_hz();
    let mut samples: Vec<Complex64> = clean.samples().to_vec();

    // IQ imbalance: passband I*cos - g*Q*sin(wt + phi) maps at baseband to
    // mu*x + nu*conj(x) with g the linear amplitude ratio.
    if profile.iq_gain_imbalance_db != 0.0 || profile.iq_phase_imbalance_rad != 0.0 {
        let g = 10f64.powf(profile.iq_gain_imbalance_db / 20.0);
        let e = Complex64::from_polar(g, profile.iq_phase_imbalance_rad);
        let mu = (Complex64::new(1.0, 0.0) + e) * 0.5;
        let nu = (Complex64::new(1.0, 0.0) - e) * 0.5;
        for s in &mut samples {
            *s = mu * *s + nu * s.conj();
        }
    }

    if profile.dc_offset != Complex64::new(0.0, 0.0) {
        for s in &mut samples {
            *s += profile.dc_offset;
        }
    }

    if profile.pa_gain_compression != 0.0 {
        let a = profile.pa_gain_compression;
        for s in &mut samples {
            *s *= 1.0 - a * s.norm_sqr();
        }
    }

    if profile.cfo_hz != 0.0 {
        let step = 2.0 * std::f64::consts::PI * profile.cfo_hz / fs;
        for (n, s) in samples.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, step * n as f64);
        }
    }

    if profile.phase_noise_std_rad != 0.0 {
        let mut rng = rng_for(seed, "phase-noise", &[u64::from(profile.emitter_id)]);
        let mut theta = 0.0f64;
        for s in &mut samples {
            let w: f64 = StandardNormal.sample(&mut rng);
            theta += w * profile.phase_noise_std_rad;
            *s *= Complex64::from_polar(1.0, theta);
        }
    }

    clean
        .with_samples(samples)
        .expect("length unchanged, sequence stays valid")
}
