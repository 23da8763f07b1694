//! Sequential network container: shape validation, seeded initialization,
//! cached forward, and gradient accumulation.

use rand::Rng;

use super::{Layer, LayerSpec, NnError, Scalar, TensorND};
use crate::seed::rng_for;

#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    seed: u64,
    checked: bool,
}

impl<T: Scalar> Network<T> {
    /// Builds and initializes the network. The shape chain is validated
    /// upfront so every forward allocates exactly the declared shapes.
    ///
    /// Initialization: He-uniform for layers feeding a ReLU, Glorot-uniform
    /// otherwise; biases start at zero. Deterministic given `seed`.
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let mut shape = input_shape.clone();
        for (i, spec) in specs.iter().enumerate() {
            shape = spec.output_shape(&shape).map_err(|e| match e {
                NnError::ShapeMismatch { expected, got } => NnError::BadLayer {
                    layer: i,
                    kind: spec.kind_name().into(),
                    detail: format!("cannot accept shape {got:?} (expects {expected:?})"),
                },
                other => other,
            })?;
        }
        let output_shape = shape;

        let mut layers: Vec<Layer<T>> = specs.iter().cloned().map(Layer::new).collect();
        for i in 0..layers.len() {
            let Some((fan_in, fan_out)) = layers[i].spec.fan_in_out() else {
                continue;
            };
            let feeds_relu = specs[i + 1..]
                .iter()
                .find_map(|s| match s {
                    LayerSpec::Relu => Some(true),
                    LayerSpec::Sigmoid | LayerSpec::Softmax => Some(false),
                    _ => None,
                })
                .unwrap_or(false);
            let limit = if feeds_relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let mut rng = rng_for(seed, "init", &[i as u64]);
            for w in layers[i].weights.data_mut() {
                *w = T::from_f64c(rng.random_range(-limit..limit));
            }
        }

        Ok(Self {
            layers,
            input_shape,
            output_shape,
            seed,
            checked: true,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Finite-value checking after every layer (on by default; benchmarks
    /// turn it off).
    pub fn set_checked(&mut self, checked: bool) {
        self.checked = checked;
    }

    fn run(&mut self, x: &TensorND<T>, cache: bool) -> Result<TensorND<T>, NnError> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_shape.clone(),
                got: x.shape().to_vec(),
            });
        }
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            cur = layer.forward(&cur, cache)?;
            if self.checked && cur.first_non_finite().is_some() {
                return Err(NnError::NonFinite {
                    layer: i,
                    stage: "forward".into(),
                });
            }
        }
        Ok(cur)
    }

    /// Forward pass that caches activations for a following `backward`.
    pub fn forward(&mut self, x: &TensorND<T>) -> Result<TensorND<T>, NnError> {
        self.run(x, true)
    }

    /// Forward pass without caching, for evaluation.
    pub fn infer(&mut self, x: &TensorND<T>) -> Result<TensorND<T>, NnError> {
        self.run(x, false)
    }

    /// Backpropagates `upstream` (gradient w.r.t. the network output),
    /// accumulating parameter gradients; returns the gradient w.r.t. the
    /// network input.
    pub fn backward(&mut self, upstream: &TensorND<T>) -> Result<TensorND<T>, NnError> {
        let mut grad = upstream.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            grad = layer.backward(&grad)?;
            if self.checked && grad.first_non_finite().is_some() {
                return Err(NnError::NonFinite {
                    layer: i,
                    stage: "backward".into(),
                });
            }
        }
        Ok(grad)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }
}
