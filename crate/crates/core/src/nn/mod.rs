//! Minimal differentiable-network kernel.
//!
//! Fixed sequential topologies only: enough for the convolutional
//! autoencoder generator, the CNN discriminator, and the CNN classifier.
//! Element type is generic so training runs in f32 while gradient checks
//! promote the same code path to f64.

mod checkpoint;
mod layer;
mod loss;
mod network;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layer::{Layer, LayerSpec, Padding};
pub use loss::{categorical_cross_entropy, gan_losses, GanLossConfig, PROB_CLAMP_EPS};
pub use network::Network;
pub use optim::{adam_update, sgd_update, AdamHyper, AdamOptimizer, SgdOptimizer};
pub use tensor::TensorND;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("layer {layer} ({kind}): {detail}")]
    BadLayer {
        layer: usize,
        kind: String,
        detail: String,
    },

    #[error("non-finite value produced by layer {layer} during {stage}")]
    NonFinite { layer: usize, stage: String },

    #[error("backward called before forward cached activations")]
    MissingForward,

    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },

    #[error("parameter/gradient length mismatch: {params} vs {grads}")]
    ParamGradMismatch { params: usize, grads: usize },

    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Element type of tensors and parameters.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64c(v: f64) -> Self;
    fn to_f64c(self) -> f64;
    fn from_f32c(v: f32) -> Self;
    fn to_f32c(self) -> f32;
}

impl Scalar for f32 {
    fn from_f64c(v: f64) -> Self {
        v as f32
    }
    fn to_f64c(self) -> f64 {
        f64::from(self)
    }
    fn from_f32c(v: f32) -> Self {
        v
    }
    fn to_f32c(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64c(v: f64) -> Self {
        v
    }
    fn to_f64c(self) -> f64 {
        self
    }
    fn from_f32c(v: f32) -> Self {
        f64::from(v)
    }
    fn to_f32c(self) -> f32 {
        self as f32
    }
}

/// y += alpha * x over equal-length slices. Element-wise, so the compiler
/// may vectorize freely without changing results.
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dot product with eight fixed-order partial accumulators. The grouping is
/// part of the definition, so the result is identical on every target.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let ax = &a[c * 8..c * 8 + 8];
        let bx = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] = acc[l] + ax[l] * bx[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    let head = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    head + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_serial_reference() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64) * 0.1 - 1.5).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64) * -0.05 + 0.7).collect();
        let serial: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - serial).abs() < 1e-12);
    }

    #[test]
    fn axpy_accumulates() {
        let x = vec![1.0f32, 2.0, 3.0];
        let mut y = vec![10.0f32, 20.0, 30.0];
        axpy(2.0, &x, &mut y);
        assert_eq!(y, vec![12.0, 24.0, 36.0]);
    }
}
