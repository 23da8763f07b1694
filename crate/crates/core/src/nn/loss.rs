//! Categorical cross-entropy and the adversarial losses.

use super::{NnError, Scalar, TensorND};

/// Probabilities are clamped into [eps, 1-eps] inside logarithms.
pub const PROB_CLAMP_EPS: f64 = 1e-7;

fn clamp01(p: f64) -> f64 {
    p.clamp(PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
}

/// Mean over the batch of -ln p[label], with the gradient w.r.t. the
/// probabilities. `probs` is [classes] (single example) or
/// [batch, classes]; chained through softmax backward this yields the
/// familiar (probs - one_hot) / batch gradient at the logits.
pub fn categorical_cross_entropy<T: Scalar>(
    probs: &TensorND<T>,
    labels: &[usize],
) -> Result<(f64, TensorND<T>), NnError> {
    let (batch, classes) = match *probs.shape() {
        [c] => (1usize, c),
        [b, c] => (b, c),
        _ => {
            return Err(NnError::ShapeMismatch {
                expected: vec![0, 0],
                got: probs.shape().to_vec(),
            })
        }
    };
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch {
            expected: vec![batch],
            got: vec![labels.len()],
        });
    }
    let mut grad = TensorND::zeros(probs.shape());
    let mut loss = 0.0f64;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(NnError::BadLabel { label, classes });
        }
        let p = clamp01(probs.data()[b * classes + label].to_f64c());
        loss -= p.ln();
        grad.data_mut()[b * classes + label] = T::from_f64c(-1.0 / (batch as f64 * p));
    }
    Ok((loss / batch as f64, grad))
}

#[derive(Debug, Clone, Copy)]
pub struct GanLossConfig {
    /// Non-saturating generator loss -mean ln D(fake); the literal
    /// mean ln(1 - D(fake)) descent is kept behind this flag for fidelity
    /// experiments. Both share the minimax fixed point.
    pub non_saturating: bool,
}

impl Default for GanLossConfig {
    fn default() -> Self {
        Self {
            non_saturating: true,
        }
    }
}

/// Discriminator and generator losses with gradients w.r.t. the emitted
/// probabilities.
#[derive(Debug, Clone)]
pub struct GanLossOutput<T> {
    pub d_loss: f64,
    pub g_loss: f64,
    /// d(d_loss)/d(D(real_i))
    pub d_grad_real: Vec<T>,
    /// d(d_loss)/d(D(fake_i))
    pub d_grad_fake: Vec<T>,
    /// d(g_loss)/d(D(fake_i))
    pub g_grad_fake: Vec<T>,
}

/// The value function split into a discriminator descent target
/// (-mean ln D(real) - mean ln(1 - D(fake)), i.e. ascent on the minimax
/// objective) and the generator's counter-objective.
pub fn gan_losses<T: Scalar>(d_real: &[T], d_fake: &[T], cfg: GanLossConfig) -> GanLossOutput<T> {
    let nr = d_real.len().max(1) as f64;
    let nf = d_fake.len().max(1) as f64;

    let mut d_loss = 0.0f64;
    let mut d_grad_real = Vec::with_capacity(d_real.len());
    for &p in d_real {
        let p = clamp01(p.to_f64c());
        d_loss -= p.ln() / nr;
        d_grad_real.push(T::from_f64c(-1.0 / (nr * p)));
    }

    let mut g_loss = 0.0f64;
    let mut d_grad_fake = Vec::with_capacity(d_fake.len());
    let mut g_grad_fake = Vec::with_capacity(d_fake.len());
    for &p in d_fake {
        let p = clamp01(p.to_f64c());
        d_loss -= (1.0 - p).ln() / nf;
        d_grad_fake.push(T::from_f64c(1.0 / (nf * (1.0 - p))));
        if cfg.non_saturating {
            g_loss -= p.ln() / nf;
            g_grad_fake.push(T::from_f64c(-1.0 / (nf * p)));
        } else {
            g_loss += (1.0 - p).ln() / nf;
            g_grad_fake.push(T::from_f64c(-1.0 / (nf * (1.0 - p))));
        }
    }

    GanLossOutput {
        d_loss,
        g_loss,
        d_grad_real,
        d_grad_fake,
        g_grad_fake,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_one_hot_prediction_has_zero_loss() {
        let probs = TensorND::<f64>::new(vec![4], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let (loss, _) = categorical_cross_entropy(&probs, &[1]).unwrap();
        assert!(loss.abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn uniform_prediction_over_four_classes() {
        let probs = TensorND::<f64>::new(vec![4], vec![0.25; 4]).unwrap();
        let (loss, _) = categorical_cross_entropy(&probs, &[2]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn batch_of_two_matches_hand_computation() {
        // Example 1: p[label] = 0.7; example 2: p[label] = 0.2.
        let probs = TensorND::<f64>::new(
            vec![2, 3],
            vec![0.7, 0.2, 0.1, 0.3, 0.2, 0.5],
        )
        .unwrap();
        let (loss, grad) = categorical_cross_entropy(&probs, &[0, 1]).unwrap();
        let hand = -(0.7f64.ln() + 0.2f64.ln()) / 2.0;
        assert!((loss - hand).abs() < 1e-6, "loss {loss} vs {hand}");
        assert!((grad.data()[0] - (-1.0 / (2.0 * 0.7))).abs() < 1e-9);
        assert!((grad.data()[4] - (-1.0 / (2.0 * 0.2))).abs() < 1e-9);
        assert_eq!(grad.data()[1], 0.0);
    }

    #[test]
    fn ce_through_softmax_gives_probs_minus_one_hot() {
        use crate::nn::{Layer, LayerSpec};
        let logits = TensorND::<f64>::new(vec![4], vec![0.4, -1.2, 2.0, 0.1]).unwrap();
        let mut softmax = Layer::new(LayerSpec::Softmax);
        let probs = softmax.forward(&logits, true).unwrap();
        let (_, dprobs) = categorical_cross_entropy(&probs, &[2]).unwrap();
        let dlogits = softmax.backward(&dprobs).unwrap();
        for c in 0..4 {
            let expect = probs.data()[c] - if c == 2 { 1.0 } else { 0.0 };
            assert!(
                (dlogits.data()[c] - expect).abs() < 1e-9,
                "class {c}: {} vs {expect}",
                dlogits.data()[c]
            );
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let probs = TensorND::<f64>::new(vec![4], vec![0.25; 4]).unwrap();
        assert!(matches!(
            categorical_cross_entropy(&probs, &[4]),
            Err(NnError::BadLabel { label: 4, classes: 4 })
        ));
    }

    #[test]
    fn perfect_discriminator_has_zero_loss() {
        let out = gan_losses::<f64>(&[1.0, 1.0], &[0.0, 0.0], GanLossConfig::default());
        assert!(out.d_loss.abs() < 1e-6, "d_loss {}", out.d_loss);
    }

    #[test]
    fn equilibrium_loss_is_two_ln_two() {
        let out = gan_losses::<f64>(&[0.5; 8], &[0.5; 8], GanLossConfig::default());
        assert!(
            (out.d_loss - 2.0 * 2.0f64.ln()).abs() < 1e-9,
            "d_loss {}",
            out.d_loss
        );
    }

    #[test]
    fn both_generator_forms_push_fakes_toward_real() {
        for non_saturating in [true, false] {
            let out = gan_losses::<f64>(&[0.8], &[0.3], GanLossConfig { non_saturating });
            // Descending g_loss must increase D(fake).
            assert!(
                out.g_grad_fake[0] < 0.0,
                "non_saturating={non_saturating}: grad {}",
                out.g_grad_fake[0]
            );
        }
    }
}
