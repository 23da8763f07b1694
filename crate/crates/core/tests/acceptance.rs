//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `--nocapture` to see them on success).
//!
//! Criteria 1-7 are exact or statistical properties of the kernels.
//! Criterion 8 runs the pinned desk-scale experiment plus five alternate
//! seeds and checks the directional results; criterion 9 re-runs the pinned
//! pipeline and compares the report bytes.

use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use seilab::cgan::{build_generator, generator_specs, width_for_rate};
use seilab::config::ExperimentConfig;
use seilab::eval::{EvalReport, Method};
use seilab::nn::{
    categorical_cross_entropy, gan_losses, GanLossConfig, Layer, LayerSpec, Network, Padding,
    TensorND,
};
use seilab::noise::{add_awgn, measured_snr_db};
use seilab::pipeline;
use seilab::resample::{csi_upsample, lai_upsample, CubicSpline, KnotGrid};
use seilab::seed::rng_for;
use seilab::signal::ComplexSequence;
use seilab::spectro::{channel_independent_spectrogram, spectro_width, SpectroConfig};
use seilab::tensorize::LabelEmbedder;

fn pass(criterion: usize, detail: &str) {
    println!("ACCEPTANCE {criterion}: PASS - {detail}");
}

// ---------------------------------------------------------------------------
// 1. Interpolation exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_interpolation_exactness() {
    let start = Instant::now();

    // LAI reproduces degree <= 1 exactly.
    let a = Complex64::new(1.5, -0.25);
    let b = Complex64::new(-0.75, 2.0);
    let line: Vec<Complex64> = (0..12).map(|k| a * k as f64 + b).collect();
    let sig = ComplexSequence::new(line.clone(), 1.0).unwrap();
    let up = lai_upsample(&sig, 8).unwrap();
    let mut lai_err = 0.0f64;
    for (m, &v) in up.samples().iter().enumerate() {
        let t = m as f64 / 8.0;
        lai_err = lai_err.max((v - (a * t + b)).norm());
    }
    assert!(lai_err < 1e-9, "LAI degree-1 error {lai_err}");

    // CSI (not-a-knot) reproduces degree <= 3 exactly on >= 4 uniform knots.
    let p = |t: f64| {
        Complex64::new(
            t * t * t - 2.0 * t + 0.5,
            -0.3 * t * t * t + 0.8 * t * t - 1.0,
        )
    };
    let knots: Vec<Complex64> = (0..8).map(|k| p(k as f64)).collect();
    let sig = ComplexSequence::new(knots.clone(), 1.0).unwrap();
    let up = csi_upsample(&sig, 4).unwrap();
    let mut csi_err = 0.0f64;
    for (m, &v) in up.samples().iter().enumerate() {
        let t = m as f64 / 4.0;
        csi_err = csi_err.max((v - p(t)).norm());
    }
    assert!(csi_err < 1e-9, "CSI degree-3 error {csi_err}");

    // Knot samples pass through to 1e-12 for both methods.
    let mut rng = rng_for(1, "acceptance-knots", &[]);
    let vals: Vec<Complex64> = (0..40)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let sig = ComplexSequence::new(vals.clone(), 2.5e6).unwrap();
    for up in [lai_upsample(&sig, 8).unwrap(), csi_upsample(&sig, 8).unwrap()] {
        for (k, &v) in vals.iter().enumerate() {
            assert!((up.samples()[8 * k] - v).norm() < 1e-12, "knot {k}");
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(
        1,
        &format!(
            "LAI deg-1 err {lai_err:.2e}, CSI deg-3 err {csi_err:.2e}, knots exact ({:.0} ms)",
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Spline continuity conditions
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_spline_conditions() {
    let start = Instant::now();
    let mut max_value_jump = 0.0f64;
    let mut max_slope_jump = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = rng_for(trial, "acceptance-spline", &[]);
        let n = 8 + (trial % 33) as usize;
        let values: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let grid = KnotGrid::uniform(values, 1.0).unwrap();
        let spline = CubicSpline::not_a_knot(&grid).unwrap();
        let pieces = spline.pieces();
        for i in 0..pieces.len() - 1 {
            let t = pieces[i].end;
            max_value_jump =
                max_value_jump.max((pieces[i].value_at(t) - pieces[i + 1].value_at(t)).norm());
            max_slope_jump = max_slope_jump
                .max((pieces[i].derivative_at(t) - pieces[i + 1].derivative_at(t)).norm());
        }
    }
    assert!(max_value_jump < 1e-9, "value jump {max_value_jump}");
    assert!(max_slope_jump < 1e-9, "slope jump {max_slope_jump}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(
        2,
        &format!(
            "100 random signals: value jump {max_value_jump:.2e}, slope jump {max_slope_jump:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Gradient suite (central finite differences, f64 check path)
// ---------------------------------------------------------------------------

const FD_H: f64 = 1e-3;

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-6)
}

/// Inputs that keep finite differences away from kinks: distinct values
/// with margins far larger than the step for pool layers, and magnitudes
/// bounded away from zero for ReLU.
fn kink_safe_input(shape: &[usize], seed: u64) -> TensorND<f64> {
    let len: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..len)
        .map(|i| 0.15 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    use rand::seq::SliceRandom;
    values.shuffle(&mut rng_for(seed, "fd-input", &[]));
    TensorND::new(shape.to_vec(), values).unwrap()
}

/// Checks one layer: loss = sum(r .* forward(x)), analytic gradients
/// against central finite differences over every parameter (and the input,
/// except for the index-valued embedding).
fn fd_check_layer(spec: LayerSpec, input_shape: &[usize], seed: u64) -> f64 {
    let mut net = Network::<f64>::new(input_shape.to_vec(), vec![spec.clone()], seed).unwrap();
    // Give parameterless layers nothing to randomize; trainable layers got
    // seeded init from the network builder.
    let input = match spec {
        LayerSpec::Embedding { vocab, .. } => {
            TensorND::new(vec![1], vec![(seed % vocab as u64) as f64]).unwrap()
        }
        _ => kink_safe_input(input_shape, seed),
    };
    let out = net.forward(&input).unwrap();
    let mut rng = rng_for(seed, "fd-upstream", &[]);
    let upstream = TensorND::from_fn(out.shape(), |_| rng.random::<f64>() + 0.25);

    let loss = |net: &mut Network<f64>, x: &TensorND<f64>| -> f64 {
        let y = net.infer(x).unwrap();
        y.data()
            .iter()
            .zip(upstream.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    net.zero_grads();
    let analytic_input_grad = net.backward(&upstream).unwrap();

    let mut worst = 0.0f64;

    // Parameters.
    for li in 0..net.layers().len() {
        for which in 0..2 {
            let len = {
                let layer = &net.layers()[li];
                if layer.spec.param_shapes().is_none() {
                    continue;
                }
                if which == 0 {
                    layer.weights.len()
                } else {
                    layer.bias.len()
                }
            };
            for p in 0..len {
                let analytic = {
                    let layer = &net.layers()[li];
                    if which == 0 {
                        layer.grad_weights.data()[p]
                    } else {
                        layer.grad_bias.data()[p]
                    }
                };
                let mut eval_at = |delta: f64| {
                    {
                        let layer = &mut net.layers_mut()[li];
                        let t = if which == 0 {
                            &mut layer.weights
                        } else {
                            &mut layer.bias
                        };
                        t.data_mut()[p] += delta;
                    }
                    let v = loss(&mut net, &input);
                    {
                        let layer = &mut net.layers_mut()[li];
                        let t = if which == 0 {
                            &mut layer.weights
                        } else {
                            &mut layer.bias
                        };
                        t.data_mut()[p] -= delta;
                    }
                    v
                };
                let fd = (eval_at(FD_H) - eval_at(-FD_H)) / (2.0 * FD_H);
                if analytic.abs() > 1e-9 || fd.abs() > 1e-9 {
                    worst = worst.max(rel_err(analytic, fd));
                }
            }
        }
    }

    // Input gradient (embedding input is an index, not differentiable).
    if !matches!(spec, LayerSpec::Embedding { .. }) {
        for p in 0..input.len() {
            let mut x = input.clone();
            x.data_mut()[p] += FD_H;
            let up = loss(&mut net, &x);
            x.data_mut()[p] -= 2.0 * FD_H;
            let down = loss(&mut net, &x);
            let fd = (up - down) / (2.0 * FD_H);
            let analytic = analytic_input_grad.data()[p];
            if analytic.abs() > 1e-9 || fd.abs() > 1e-9 {
                worst = worst.max(rel_err(analytic, fd));
            }
        }
    }
    worst
}

#[test]
fn criterion_3_gradient_suite() {
    let start = Instant::now();
    let conv = |ic: usize, oc: usize, k: (usize, usize), pad: Padding| LayerSpec::Conv2d {
        in_channels: ic,
        out_channels: oc,
        kernel: k,
        padding: pad,
    };
    let cases: Vec<(LayerSpec, Vec<usize>)> = vec![
        (conv(1, 2, (1, 3), Padding::Same), vec![1, 3, 8]),
        (conv(2, 3, (1, 3), Padding::Same), vec![2, 4, 10]),
        (conv(2, 2, (2, 3), Padding::Valid), vec![2, 4, 7]),
        (
            LayerSpec::Dense {
                in_features: 5,
                out_features: 3,
            },
            vec![5],
        ),
        (
            LayerSpec::Dense {
                in_features: 8,
                out_features: 1,
            },
            vec![8],
        ),
        (
            LayerSpec::Dense {
                in_features: 12,
                out_features: 6,
            },
            vec![12],
        ),
        (LayerSpec::Relu, vec![7]),
        (LayerSpec::Relu, vec![2, 3, 4]),
        (LayerSpec::Relu, vec![10]),
        (LayerSpec::Sigmoid, vec![6]),
        (LayerSpec::Sigmoid, vec![1, 4, 5]),
        (LayerSpec::Sigmoid, vec![9]),
        (LayerSpec::MaxPool2d { pool: (1, 2) }, vec![1, 2, 6]),
        (LayerSpec::MaxPool2d { pool: (2, 2) }, vec![2, 4, 6]),
        (LayerSpec::MaxPool2d { pool: (1, 4) }, vec![3, 2, 8]),
        (LayerSpec::Upsample2d { factor: (1, 2) }, vec![2, 3, 4]),
        (LayerSpec::Upsample2d { factor: (2, 2) }, vec![1, 2, 3]),
        (LayerSpec::Upsample2d { factor: (1, 4) }, vec![2, 2, 5]),
        (LayerSpec::Embedding { vocab: 5, dim: 4 }, vec![1]),
        (LayerSpec::Embedding { vocab: 3, dim: 7 }, vec![1]),
        (LayerSpec::Embedding { vocab: 8, dim: 2 }, vec![1]),
        (LayerSpec::Softmax, vec![4]),
        (LayerSpec::Softmax, vec![6]),
        (LayerSpec::Softmax, vec![3]),
        (LayerSpec::Flatten, vec![2, 3, 4]),
        (LayerSpec::Flatten, vec![1, 5, 2]),
        (LayerSpec::Flatten, vec![4, 2, 2]),
    ];
    let mut worst = 0.0f64;
    let mut worst_kind = "";
    for (i, (spec, shape)) in cases.iter().enumerate() {
        let err = fd_check_layer(spec.clone(), shape, 1000 + i as u64);
        if err > worst {
            worst = err;
            worst_kind = spec.kind_name();
        }
        assert!(
            err < 1e-4,
            "{} on {shape:?}: FD relative error {err:.3e}",
            spec.kind_name()
        );
    }

    // Cross-entropy gradient w.r.t. probabilities.
    for seed in 0..3u64 {
        let mut rng = rng_for(seed, "fd-ce", &[]);
        let mut softmax = Layer::<f64>::new(LayerSpec::Softmax);
        let logits = TensorND::from_fn(&[4], |_| rng.random::<f64>() * 2.0 - 1.0);
        let probs = softmax.forward(&logits, false).unwrap();
        let label = (seed % 4) as usize;
        let (_, grad) = categorical_cross_entropy(&probs, &[label]).unwrap();
        for p in 0..4 {
            let mut up = probs.clone();
            up.data_mut()[p] += FD_H;
            let (lu, _) = categorical_cross_entropy(&up, &[label]).unwrap();
            let mut down = probs.clone();
            down.data_mut()[p] -= FD_H;
            let (ld, _) = categorical_cross_entropy(&down, &[label]).unwrap();
            let fd = (lu - ld) / (2.0 * FD_H);
            let analytic = grad.data()[p];
            if analytic.abs() > 1e-9 || fd.abs() > 1e-9 {
                let err = rel_err(analytic, fd);
                assert!(err < 1e-4, "CE grad p{p}: {err:.3e}");
                worst = worst.max(err);
            }
        }
    }

    // Adversarial losses w.r.t. the emitted probabilities.
    for seed in 0..3u64 {
        let mut rng = rng_for(seed, "fd-gan", &[]);
        let d_real: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 0.8 + 0.1).collect();
        let d_fake: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 0.8 + 0.1).collect();
        for non_saturating in [true, false] {
            let cfg = GanLossConfig { non_saturating };
            let out = gan_losses(&d_real, &d_fake, cfg);
            for i in 0..d_fake.len() {
                let mut up = d_fake.clone();
                up[i] += FD_H;
                let mut down = d_fake.clone();
                down[i] -= FD_H;
                let d_fd = (gan_losses(&d_real, &up, cfg).d_loss
                    - gan_losses(&d_real, &down, cfg).d_loss)
                    / (2.0 * FD_H);
                let g_fd = (gan_losses(&d_real, &up, cfg).g_loss
                    - gan_losses(&d_real, &down, cfg).g_loss)
                    / (2.0 * FD_H);
                let d_err = rel_err(out.d_grad_fake[i], d_fd);
                let g_err = rel_err(out.g_grad_fake[i], g_fd);
                assert!(d_err < 1e-4, "d_loss grad fake {i}: {d_err:.3e}");
                assert!(g_err < 1e-4, "g_loss grad fake {i}: {g_err:.3e}");
                worst = worst.max(d_err).max(g_err);
            }
            for i in 0..d_real.len() {
                let mut up = d_real.clone();
                up[i] += FD_H;
                let mut down = d_real.clone();
                down[i] -= FD_H;
                let fd = (gan_losses(&up, &d_fake, cfg).d_loss
                    - gan_losses(&down, &d_fake, cfg).d_loss)
                    / (2.0 * FD_H);
                let err = rel_err(out.d_grad_real[i], fd);
                assert!(err < 1e-4, "d_loss grad real {i}: {err:.3e}");
                worst = worst.max(err);
            }
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(
        3,
        &format!(
            "9 layer kinds x 3 shapes + both losses: worst rel err {worst:.2e} ({worst_kind}), {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. GAN equilibrium identity
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_equilibrium_identity() {
    let out = gan_losses::<f64>(&[0.5; 64], &[0.5; 64], GanLossConfig::default());
    let expect = 2.0 * std::f64::consts::LN_2;
    let err = (out.d_loss - expect).abs();
    assert!(err < 1e-6, "d_loss {} vs 2 ln 2", out.d_loss);
    pass(4, &format!("D = 0.5 gives d_loss = 2 ln 2 ({err:.1e} off)"));
}

// ---------------------------------------------------------------------------
// 5. Shape contracts
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_shape_contracts() {
    for rate in [2.5e6, 5e6, 10e6] {
        let w = width_for_rate(rate).unwrap();
        let mut g = build_generator(rate, 7).unwrap();
        assert_eq!(g.input_shape(), &[2, 4, w]);
        assert_eq!(g.output_shape(), &[2, 4, 320]);
        let x = TensorND::from_fn(&[2, 4, w], |i| ((i * 31 % 17) as f32 / 17.0));
        let y = g.infer(&x).unwrap();
        assert_eq!(y.shape(), &[2, 4, 320], "rate {rate}");
        assert!(generator_specs(rate).is_ok());
    }
    let embedder = LabelEmbedder::new(4, 3);
    assert_eq!(embedder.fc_output_len(320).unwrap(), 1280);
    let channel = embedder.label_channel(2, 320).unwrap();
    assert_eq!(channel.shape(), &[4, 320]);
    pass(
        5,
        "generators map 4x{40,80,160}x2 -> 4x320x2; label FC emits 1,280 values at width 320",
    );
}

// ---------------------------------------------------------------------------
// 6. SNR calibration
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_snr_calibration() {
    let grid: Vec<f64> = (0..8).map(|i| 9.0 + 3.0 * i as f64).collect();
    assert_eq!(grid.len(), 8);
    let mut worst = 0.0f64;
    for (gi, &snr) in grid.iter().enumerate() {
        for trial in 0..100u64 {
            let mut rng = rng_for(trial, "acceptance-snr", &[gi as u64]);
            let samples: Vec<Complex64> = (0..320)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let sig = ComplexSequence::new(samples, 20e6).unwrap();
            let noisy = add_awgn(&sig, snr, trial * 8 + gi as u64).unwrap();
            let err = (measured_snr_db(&sig, &noisy) - snr).abs();
            worst = worst.max(err);
            assert!(err < 0.5, "{snr} dB trial {trial}: error {err}");
        }
    }
    pass(
        6,
        &format!("100 trials x 8 grid points: worst SNR error {worst:.2e} dB"),
    );
}

// ---------------------------------------------------------------------------
// 7. Spectrogram width and gain invariance
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_spectrogram_width() {
    let reference = SpectroConfig {
        window_len: 64,
        hop: 32,
        spreading_factor: 7,
        bandwidth_hz: 125e3,
        sample_rate_hz: 250e3,
    };
    assert_eq!(spectro_width(&reference).unwrap(), 63);

    let mut rng = rng_for(7, "acceptance-spectro", &[]);
    let mut checked = 0usize;
    while checked < 20 {
        let hop = [8usize, 16, 32][rng.random_range(0..3)];
        let window = hop * rng.random_range(1..=4usize);
        let cfg = SpectroConfig {
            window_len: window,
            hop,
            spreading_factor: rng.random_range(5..=9),
            bandwidth_hz: 125e3 * rng.random_range(1..=4) as f64,
            sample_rate_hz: 125e3 * rng.random_range(1..=8) as f64,
        };
        let Ok(m) = spectro_width(&cfg) else {
            continue; // config too small for one window; not a valid case
        };
        if m < 2 {
            continue;
        }
        let len = cfg.implied_signal_len().ceil() as usize;
        let signal = ComplexSequence::new(
            (0..len)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect(),
            cfg.sample_rate_hz,
        )
        .unwrap();
        let spec = channel_independent_spectrogram(&signal, &cfg).unwrap();
        assert_eq!(spec.cols, m - 1, "config {cfg:?}");
        assert_eq!(spec.rows, cfg.window_len);

        // Gain invariance at 1e-6.
        let gain = Complex64::new(rng.random::<f64>() * 3.0 - 1.5, rng.random::<f64>() * 2.0);
        if gain.norm() > 1e-3 {
            let scaled = signal
                .with_samples(signal.samples().iter().map(|&z| z * gain).collect())
                .unwrap();
            let spec2 = channel_independent_spectrogram(&scaled, &cfg).unwrap();
            let dev = spec
                .data
                .iter()
                .zip(&spec2.data)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dev < 1e-6, "gain leakage {dev} for {cfg:?}");
        }
        checked += 1;
    }
    pass(
        7,
        "reference M = 63; 20 random valid configs give width M-1 with gain invariance < 1e-6",
    );
}

// ---------------------------------------------------------------------------
// 8 and 9. Desk-scale directional experiment and determinism
// ---------------------------------------------------------------------------

const PINNED_SEED: u64 = 20260809;
const ALT_SEEDS: [u64; 5] = [101, 202, 303, 404, 505];

struct DeskRun {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
    reports: Vec<EvalReport>,
}

fn desk_run(seed: u64) -> DeskRun {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut cfg = ExperimentConfig::desk(seed);
    cfg.out_dir = dir.path().join("run");
    let reports = pipeline::run_all(&cfg, false).expect("desk pipeline");
    DeskRun {
        _dir: dir,
        cfg,
        reports,
    }
}

static PINNED: OnceLock<DeskRun> = OnceLock::new();

fn pinned_run() -> &'static DeskRun {
    PINNED.get_or_init(|| desk_run(PINNED_SEED))
}

fn find<'a>(reports: &'a [EvalReport], method: Method, rate: f64) -> &'a EvalReport {
    reports
        .iter()
        .find(|r| r.method == method && (method == Method::FullRate || r.low_rate_hz == rate))
        .unwrap_or_else(|| panic!("report {method:?} @ {rate} missing"))
}

/// The directional sub-criteria (b), (c), (d) on one run's reports.
fn directional_checks(reports: &[EvalReport]) -> (bool, bool, bool, String) {
    let full = find(reports, Method::FullRate, 0.0);
    let cgan5 = find(reports, Method::Cgan, 5e6);
    let cnn5 = find(reports, Method::CnnOnly, 5e6);

    let b = cgan5.mean_over_snr_pct().unwrap() >= cnn5.mean_over_snr_pct().unwrap();

    let mut c = true;
    for rate in [2.5e6, 5e6] {
        let csi = find(reports, Method::Csi, rate);
        let lai = find(reports, Method::Lai, rate);
        c &= csi.mean_over_snr_pct().unwrap() >= lai.mean_over_snr_pct().unwrap();
    }

    let mut d = true;
    for snr in full.snrs() {
        d &= full.average_accuracy_pct(snr).unwrap() >= cgan5.average_accuracy_pct(snr).unwrap();
    }

    let detail = format!(
        "full {:.1} cgan@5 {:.1} cnn@5 {:.1} | csi/lai@5 {:.1}/{:.1} csi/lai@2.5 {:.1}/{:.1}",
        full.mean_over_snr_pct().unwrap(),
        cgan5.mean_over_snr_pct().unwrap(),
        cnn5.mean_over_snr_pct().unwrap(),
        find(reports, Method::Csi, 5e6).mean_over_snr_pct().unwrap(),
        find(reports, Method::Lai, 5e6).mean_over_snr_pct().unwrap(),
        find(reports, Method::Csi, 2.5e6)
            .mean_over_snr_pct()
            .unwrap(),
        find(reports, Method::Lai, 2.5e6)
            .mean_over_snr_pct()
            .unwrap(),
    );
    (b, c, d, detail)
}

#[test]
fn criterion_8_desk_scale_directional() {
    let run = pinned_run();

    // (a) full-rate accuracy above 90% at every SNR >= 21 dB.
    let full = find(&run.reports, Method::FullRate, 0.0);
    for snr in full.snrs() {
        if snr >= 21.0 {
            let acc = full.average_accuracy_pct(snr).unwrap();
            assert!(acc > 90.0, "(a) full_rate at {snr} dB: {acc:.1}%");
        }
    }

    // (b)-(d) must hold on the pinned seed.
    let (b, c, d, detail) = directional_checks(&run.reports);
    println!("  pinned {PINNED_SEED}: b={b} c={c} d={d} | {detail}");
    assert!(b, "(b) failed on pinned seed: {detail}");
    assert!(c, "(c) failed on pinned seed: {detail}");
    assert!(d, "(d) failed on pinned seed: {detail}");

    // ... and on at least 4 of 5 alternate seeds.
    let mut holds = 0usize;
    for seed in ALT_SEEDS {
        let alt = desk_run(seed);
        let (b, c, d, detail) = directional_checks(&alt.reports);
        println!("  alt {seed}: b={b} c={c} d={d} | {detail}");
        if b && c && d {
            holds += 1;
        }
    }
    assert!(holds >= 4, "(b)-(d) held on only {holds}/5 alternate seeds");
    pass(
        8,
        &format!("(a) pinned full-rate > 90% at >= 21 dB; (b)-(d) pinned + {holds}/5 alternates"),
    );
}

#[test]
fn criterion_9_end_to_end_determinism() {
    let first = pinned_run();
    let second = desk_run(PINNED_SEED);

    let reports_a = pipeline::RunPaths::new(&first.cfg).reports_dir();
    let reports_b = pipeline::RunPaths::new(&second.cfg).reports_dir();
    let mut names: Vec<String> = std::fs::read_dir(&reports_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in &names {
        let a = std::fs::read(reports_a.join(name)).unwrap();
        let b = std::fs::read(reports_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical pinned runs");
    }
    pass(
        9,
        &format!(
            "pinned pipeline run twice: {} report files byte-identical",
            names.len()
        ),
    );
}
