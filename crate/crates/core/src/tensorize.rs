//! Preamble-to-tensor formatting and label conditioning.
//!
//! A preamble becomes a 4 x W x C real tensor whose channel-0 rows are, in
//! order, I, Q, ln|z|, arg(z) - the raw IQ samples plus the magnitude and
//! phase supplied by the complex logarithm. Columns are min-max normalized
//! per tensor. Conditioning appends a second channel produced by a label
//! embedding (length 50) expanded through a per-width linear layer and
//! reshaped row-major to 4 x W.

use rand::Rng;
use thiserror::Error;

use crate::dataset::PreambleRecord;
use crate::nn::TensorND;
use crate::seed::rng_for;
use crate::signal::ComplexSequence;

/// Tensor widths corresponding to the supported sampling rates.
pub const SUPPORTED_WIDTHS: [usize; 4] = [40, 80, 160, 320];

/// Embedding vector length per label.
pub const EMBED_DIM: usize = 50;

/// Rows of the feature tensor.
pub const FEATURE_ROWS: usize = 4;

/// Magnitudes are floored here before the logarithm.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TensorizeError {
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("unknown label {label} (embedder holds {num_labels} labels)")]
    UnknownLabel { label: u16, num_labels: usize },

    #[error("unsupported tensor width {0} (expected 40, 80, 160, or 320)")]
    UnsupportedWidth(usize),

    #[error("width mismatch: tensor has {tensor}, label channel has {channel}")]
    WidthMismatch { tensor: usize, channel: usize },

    #[error("expected an unconditioned tensor (1 channel), got {0}")]
    AlreadyConditioned(usize),

    #[error("expected a conditioned tensor (2 channels), got {0}")]
    NotConditioned(usize),
}

/// One formatted example: data is [4, W, C] row-major, C in {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleTensor {
    pub data: TensorND<f64>,
    pub label: u16,
    pub snr_db: f64,
}

impl PreambleTensor {
    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    /// Channel-first [C, 4, W] copy, the layout the networks consume.
    pub fn nn_input(&self) -> TensorND<f64> {
        let [rows, width, channels] = *<&[usize; 3]>::try_from(self.data.shape()).unwrap();
        let src = self.data.data();
        let mut out = TensorND::zeros(&[channels, rows, width]);
        let dst = out.data_mut();
        for r in 0..rows {
            for c in 0..width {
                for ch in 0..channels {
                    dst[(ch * rows + r) * width + c] = src[(r * width + c) * channels + ch];
                }
            }
        }
        out
    }

    /// Inverse of `nn_input` for generator outputs.
    pub fn from_nn_output(
        data: &TensorND<f64>,
        label: u16,
        snr_db: f64,
    ) -> Result<Self, TensorizeError> {
        let [channels, rows, width] = *<&[usize; 3]>::try_from(data.shape())
            .map_err(|_| TensorizeError::UnsupportedWidth(0))?;
        let mut out = TensorND::zeros(&[rows, width, channels]);
        for ch in 0..channels {
            for r in 0..rows {
                for c in 0..width {
                    out.data_mut()[(r * width + c) * channels + ch] =
                        data.data()[(ch * rows + r) * width + c];
                }
            }
        }
        Ok(Self {
            data: out,
            label,
            snr_db,
        })
    }
}

/// Unnormalized feature rows [4, W, 1]: I, Q, ln|z| (floored), arg(z).
pub fn raw_feature_rows(seq: &ComplexSequence) -> Result<TensorND<f64>, TensorizeError> {
    if let Some(idx) = seq.first_non_finite() {
        return Err(TensorizeError::NonFinite(idx));
    }
    let w = seq.len();
    let mut t = TensorND::zeros(&[FEATURE_ROWS, w, 1]);
    for (c, z) in seq.samples().iter().enumerate() {
        let mag = z.norm().max(MAGNITUDE_FLOOR);
        t.data_mut()[c] = z.re;
        t.data_mut()[w + c] = z.im;
        t.data_mut()[2 * w + c] = mag.ln();
        t.data_mut()[3 * w + c] = z.arg();
    }
    Ok(t)
}

/// In-place column-wise min-max normalization of channel 0. Constant
/// columns map to zero. Idempotent.
pub fn min_max_normalize_columns(t: &mut TensorND<f64>) {
    let [rows, width, channels] = *<&[usize; 3]>::try_from(t.shape()).unwrap();
    let data = t.data_mut();
    for c in 0..width {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..rows {
            let v = data[(r * width + c) * channels];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        for r in 0..rows {
            let v = &mut data[(r * width + c) * channels];
            *v = if range == 0.0 { 0.0 } else { (*v - lo) / range };
        }
    }
}

/// Formats one record: feature rows, then per-column normalization.
pub fn to_tensor(record: &PreambleRecord) -> Result<PreambleTensor, TensorizeError> {
    let mut data = raw_feature_rows(&record.sequence)?;
    min_max_normalize_columns(&mut data);
    Ok(PreambleTensor {
        data,
        label: record.emitter_id,
        snr_db: record.snr_db,
    })
}

/// Frozen conditioning path: a shared embedding table plus one linear
/// expansion per supported width. Read-only after seeded construction.
#[derive(Debug, Clone)]
pub struct LabelEmbedder {
    num_labels: usize,
    table: TensorND<f64>,
    // (weights [EMBED_DIM, 4*W] transposed-dense layout, bias [4*W]) per width.
    fc: Vec<(usize, TensorND<f64>, TensorND<f64>)>,
}

impl LabelEmbedder {
    pub fn new(num_labels: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, "label-embed-table", &[]);
        let limit = (6.0 / (num_labels + EMBED_DIM) as f64).sqrt();
        let table = TensorND::from_fn(&[num_labels, EMBED_DIM], |_| {
            rng.random_range(-limit..limit)
        });
        let fc = SUPPORTED_WIDTHS
            .iter()
            .map(|&w| {
                let out = FEATURE_ROWS * w;
                let mut rng = rng_for(seed, "label-embed-fc", &[w as u64]);
                let limit = (6.0 / (EMBED_DIM + out) as f64).sqrt();
                let weights =
                    TensorND::from_fn(&[EMBED_DIM, out], |_| rng.random_range(-limit..limit));
                let bias = TensorND::zeros(&[out]);
                (w, weights, bias)
            })
            .collect();
        Self {
            num_labels,
            table,
            fc,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Length of the linear expansion for `width` (4 * width).
    pub fn fc_output_len(&self, width: usize) -> Result<usize, TensorizeError> {
        self.fc
            .iter()
            .find(|(w, _, _)| *w == width)
            .map(|(w, _, _)| FEATURE_ROWS * w)
            .ok_or(TensorizeError::UnsupportedWidth(width))
    }

    /// Embedding lookup -> linear layer -> row-major reshape to [4, W].
    /// Labels are the 1-based emitter ids.
    pub fn label_channel(&self, label: u16, width: usize) -> Result<TensorND<f64>, TensorizeError> {
        if label == 0 || usize::from(label) > self.num_labels {
            return Err(TensorizeError::UnknownLabel {
                label,
                num_labels: self.num_labels,
            });
        }
        let (_, weights, bias) = self
            .fc
            .iter()
            .find(|(w, _, _)| *w == width)
            .ok_or(TensorizeError::UnsupportedWidth(width))?;
        let out_len = FEATURE_ROWS * width;
        let row = &self.table.data()[(usize::from(label) - 1) * EMBED_DIM..][..EMBED_DIM];
        let mut out = bias.data().to_vec();
        for (k, &e) in row.iter().enumerate() {
            let wrow = &weights.data()[k * out_len..(k + 1) * out_len];
            for (o, &wv) in out.iter_mut().zip(wrow) {
                *o += e * wv;
            }
        }
        Ok(TensorND::new(vec![FEATURE_ROWS, width], out).expect("sized"))
    }
}

/// Appends `channel` as channel 1 of an unconditioned tensor.
pub fn attach_label(
    t: &PreambleTensor,
    channel: &TensorND<f64>,
) -> Result<PreambleTensor, TensorizeError> {
    if t.channels() != 1 {
        return Err(TensorizeError::AlreadyConditioned(t.channels()));
    }
    if channel.shape() != [FEATURE_ROWS, t.width()] {
        return Err(TensorizeError::WidthMismatch {
            tensor: t.width(),
            channel: channel.shape().get(1).copied().unwrap_or(0),
        });
    }
    let w = t.width();
    let mut data = TensorND::zeros(&[FEATURE_ROWS, w, 2]);
    for r in 0..FEATURE_ROWS {
        for c in 0..w {
            data.data_mut()[(r * w + c) * 2] = t.data.data()[r * w + c];
            data.data_mut()[(r * w + c) * 2 + 1] = channel.data()[r * w + c];
        }
    }
    Ok(PreambleTensor {
        data,
        label: t.label,
        snr_db: t.snr_db,
    })
}

/// Removes channel 1, recovering the unconditioned tensor exactly.
pub fn strip_label_channel(t: &PreambleTensor) -> Result<PreambleTensor, TensorizeError> {
    if t.channels() != 2 {
        return Err(TensorizeError::NotConditioned(t.channels()));
    }
    let w = t.width();
    let mut data = TensorND::zeros(&[FEATURE_ROWS, w, 1]);
    for i in 0..FEATURE_ROWS * w {
        data.data_mut()[i] = t.data.data()[i * 2];
    }
    Ok(PreambleTensor {
        data,
        label: t.label,
        snr_db: t.snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn record(samples: Vec<Complex64>, fs: f64) -> PreambleRecord {
        PreambleRecord {
            emitter_id: 1,
            snr_db: 12.0,
            realization: 1,
            sequence: ComplexSequence::new(samples, fs).unwrap(),
        }
    }

    fn preamble_record() -> PreambleRecord {
        record(
            crate::preamble::synth_clean_preamble(20e6)
                .unwrap()
                .samples()
                .to_vec(),
            20e6,
        )
    }

    #[test]
    fn preamble_tensor_shape_is_4x320x1() {
        let t = to_tensor(&preamble_record()).unwrap();
        assert_eq!(t.data.shape(), &[4, 320, 1]);
    }

    #[test]
    fn normalized_columns_span_unit_interval_or_zero() {
        let t = to_tensor(&preamble_record()).unwrap();
        let w = t.width();
        for c in 0..w {
            let col: Vec<f64> = (0..4).map(|r| t.data.data()[r * w + c]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let constant = col.iter().all(|&v| v == 0.0);
            assert!(
                constant || (lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12),
                "column {c}: min {lo}, max {hi}"
            );
        }
    }

    #[test]
    fn hand_computed_min_max_column() {
        // Column 0: z = 1+0j -> rows [1, 0, 0, 0] -> normalized unchanged.
        // Column 1: z = 0.5-0.8j -> four distinct values, normalized by hand.
        let z1 = Complex64::new(0.5, -0.8);
        let rec = record(vec![Complex64::new(1.0, 0.0), z1], 20e6);
        let t = to_tensor(&rec).unwrap();
        let w = 2;
        let col0: Vec<f64> = (0..4).map(|r| t.data.data()[r * w]).collect();
        assert_eq!(col0, vec![1.0, 0.0, 0.0, 0.0]);

        let raw = [z1.re, z1.im, z1.norm().ln(), z1.arg()];
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (r, &v) in raw.iter().enumerate() {
            let want = (v - lo) / (hi - lo);
            let got = t.data.data()[r * w + 1];
            assert!((got - want).abs() < 1e-12, "row {r}: {got} vs {want}");
        }
    }

    #[test]
    fn raw_rows_reconstruct_the_sample() {
        let rec = preamble_record();
        let raw = raw_feature_rows(&rec.sequence).unwrap();
        let w = rec.sequence.len();
        for (c, z) in rec.sequence.samples().iter().enumerate() {
            let rebuilt = Complex64::new(raw.data()[c], raw.data()[w + c]);
            assert!((rebuilt - z).norm() < 1e-15);
            assert!((raw.data()[2 * w + c] - z.norm().max(1e-12).ln()).abs() < 1e-9);
            assert!((raw.data()[3 * w + c] - z.arg()).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut t = raw_feature_rows(&preamble_record().sequence).unwrap();
        min_max_normalize_columns(&mut t);
        let once = t.clone();
        min_max_normalize_columns(&mut t);
        assert_eq!(t.data(), once.data());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let rec = record(vec![Complex64::new(f64::INFINITY, 0.0)], 20e6);
        assert!(matches!(
            to_tensor(&rec),
            Err(TensorizeError::NonFinite(0))
        ));
    }

    #[test]
    fn fc_output_lengths_follow_width() {
        let e = LabelEmbedder::new(4, 7);
        assert_eq!(e.fc_output_len(320).unwrap(), 1280);
        assert_eq!(e.fc_output_len(40).unwrap(), 160);
        assert!(matches!(
            e.fc_output_len(64),
            Err(TensorizeError::UnsupportedWidth(64))
        ));
    }

    #[test]
    fn label_channels_differ_between_labels() {
        let e = LabelEmbedder::new(4, 3);
        let a = e.label_channel(1, 320).unwrap();
        let b = e.label_channel(2, 320).unwrap();
        assert_eq!(a.shape(), &[4, 320]);
        assert!(a.data().iter().zip(b.data()).any(|(x, y)| x != y));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let e = LabelEmbedder::new(4, 3);
        assert!(matches!(
            e.label_channel(5, 320),
            Err(TensorizeError::UnknownLabel { label: 5, .. })
        ));
        assert!(e.label_channel(0, 320).is_err(), "labels are 1-based");
    }

    #[test]
    fn attach_and_strip_roundtrip() {
        let e = LabelEmbedder::new(4, 3);
        for (fs, w) in [(20e6, 320usize), (5e6, 80)] {
            let rec = record(
                crate::preamble::synth_clean_preamble(fs)
                    .unwrap()
                    .samples()
                    .to_vec(),
                fs,
            );
            let t = to_tensor(&rec).unwrap();
            let channel = e.label_channel(1, w).unwrap();
            let conditioned = attach_label(&t, &channel).unwrap();
            assert_eq!(conditioned.data.shape(), &[4, w, 2]);
            // Channel 0 preserved bit for bit.
            for r in 0..4 {
                for c in 0..w {
                    assert_eq!(
                        conditioned.data.data()[(r * w + c) * 2],
                        t.data.data()[r * w + c]
                    );
                }
            }
            let back = strip_label_channel(&conditioned).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let e = LabelEmbedder::new(4, 3);
        let t = to_tensor(&preamble_record()).unwrap(); // width 320
        let wrong = e.label_channel(1, 80).unwrap();
        assert!(matches!(
            attach_label(&t, &wrong),
            Err(TensorizeError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn nn_input_layout_roundtrips() {
        let e = LabelEmbedder::new(4, 9);
        let t = to_tensor(&preamble_record()).unwrap();
        let cond = attach_label(&t, &e.label_channel(1, 320).unwrap()).unwrap();
        let nn = cond.nn_input();
        assert_eq!(nn.shape(), &[2, 4, 320]);
        let back = PreambleTensor::from_nn_output(&nn, cond.label, cond.snr_db).unwrap();
        assert_eq!(back.data.data(), cond.data.data());
    }
}
