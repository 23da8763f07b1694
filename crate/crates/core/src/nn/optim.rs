//! Adam and SGD parameter updates.

use super::{Network, NnError, Scalar, TensorND};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient; lambda * w is added to the gradient before the update.
    pub l2: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.0,
        }
    }
}

/// One bias-corrected Adam update on a flat parameter slice. `step` is the
/// 1-based update count.
pub fn adam_update<T: Scalar>(
    hyper: &AdamHyper,
    step: u64,
    m: &mut [T],
    v: &mut [T],
    params: &mut [T],
    grads: &[T],
) -> Result<(), NnError> {
    if params.len() != grads.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(NnError::ParamGradMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    let b1 = T::from_f64c(hyper.beta1);
    let b2 = T::from_f64c(hyper.beta2);
    let one = T::one();
    let lr = T::from_f64c(hyper.lr);
    let eps = T::from_f64c(hyper.eps);
    let l2 = T::from_f64c(hyper.l2);
    let c1 = T::from_f64c(1.0 - hyper.beta1.powi(step as i32));
    let c2 = T::from_f64c(1.0 - hyper.beta2.powi(step as i32));
    for i in 0..params.len() {
        let g = grads[i] + l2 * params[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Plain stochastic gradient descent: w <- w - lr * g.
pub fn sgd_update<T: Scalar>(params: &mut [T], grads: &[T], lr: f64) -> Result<(), NnError> {
    if params.len() != grads.len() {
        return Err(NnError::ParamGradMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    let lr = T::from_f64c(lr);
    for (p, &g) in params.iter_mut().zip(grads) {
        *p = *p - lr * g;
    }
    Ok(())
}

/// Adam state for every trainable tensor of a network.
#[derive(Debug, Clone)]
pub struct AdamOptimizer<T = f32> {
    pub hyper: AdamHyper,
    step: u64,
    // (m, v) for each layer's weights then bias, in layer order.
    moments: Vec<(TensorND<T>, TensorND<T>)>,
}

impl<T: Scalar> AdamOptimizer<T> {
    pub fn for_network(net: &Network<T>, hyper: AdamHyper) -> Self {
        let mut moments = Vec::new();
        for layer in net.layers() {
            moments.push((
                TensorND::zeros(layer.weights.shape()),
                TensorND::zeros(layer.weights.shape()),
            ));
            moments.push((
                TensorND::zeros(layer.bias.shape()),
                TensorND::zeros(layer.bias.shape()),
            ));
        }
        Self {
            hyper,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies the accumulated gradients of `net`.
    pub fn step(&mut self, net: &mut Network<T>) -> Result<(), NnError> {
        self.step += 1;
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            if layer.spec.param_shapes().is_none() {
                continue;
            }
            let (mw, vw) = &mut self.moments[2 * li];
            adam_update(
                &self.hyper,
                self.step,
                mw.data_mut(),
                vw.data_mut(),
                layer.weights.data_mut(),
                layer.grad_weights.data(),
            )?;
            let (mb, vb) = &mut self.moments[2 * li + 1];
            adam_update(
                &self.hyper,
                self.step,
                mb.data_mut(),
                vb.data_mut(),
                layer.bias.data_mut(),
                layer.grad_bias.data(),
            )?;
        }
        Ok(())
    }

    /// Flat snapshot (step count, then m/v buffers) for resumable training.
    pub fn snapshot(&self) -> (u64, Vec<Vec<f32>>) {
        let mut buffers = Vec::new();
        for (m, v) in &self.moments {
            buffers.push(m.to_f32_vec());
            buffers.push(v.to_f32_vec());
        }
        (self.step, buffers)
    }

    pub fn restore(&mut self, step: u64, buffers: &[Vec<f32>]) -> Result<(), NnError> {
        if buffers.len() != self.moments.len() * 2 {
            return Err(NnError::ParamGradMismatch {
                params: self.moments.len() * 2,
                grads: buffers.len(),
            });
        }
        self.step = step;
        for (i, (m, v)) in self.moments.iter_mut().enumerate() {
            for (dst, &src) in m.data_mut().iter_mut().zip(&buffers[2 * i]) {
                *dst = T::from_f32c(src);
            }
            for (dst, &src) in v.data_mut().iter_mut().zip(&buffers[2 * i + 1]) {
                *dst = T::from_f32c(src);
            }
        }
        Ok(())
    }
}

/// SGD with classical momentum: v <- mu*v + g, w <- w - lr*v.
#[derive(Debug, Clone)]
pub struct SgdOptimizer<T = f32> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<TensorND<T>>,
}

impl<T: Scalar> SgdOptimizer<T> {
    pub fn for_network(net: &Network<T>, lr: f64, momentum: f64) -> Self {
        let mut velocity = Vec::new();
        for layer in net.layers() {
            velocity.push(TensorND::zeros(layer.weights.shape()));
            velocity.push(TensorND::zeros(layer.bias.shape()));
        }
        Self {
            lr,
            momentum,
            velocity,
        }
    }

    pub fn step(&mut self, net: &mut Network<T>) -> Result<(), NnError> {
        let mu = T::from_f64c(self.momentum);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            if layer.spec.param_shapes().is_none() {
                continue;
            }
            let (head, tail) = self.velocity.split_at_mut(2 * li + 1);
            let pairs: [(&mut TensorND<T>, &mut [T], &[T]); 2] = [
                (
                    &mut head[2 * li],
                    layer.weights.data_mut(),
                    layer.grad_weights.data(),
                ),
                (
                    &mut tail[0],
                    layer.bias.data_mut(),
                    layer.grad_bias.data(),
                ),
            ];
            for (buf, params, grads) in pairs {
                for (v, &g) in buf.data_mut().iter_mut().zip(grads) {
                    *v = mu * *v + g;
                }
                sgd_update(params, buf.data(), self.lr)?;
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<Vec<f32>> {
        self.velocity.iter().map(TensorND::to_f32_vec).collect()
    }

    pub fn restore(&mut self, buffers: &[Vec<f32>]) -> Result<(), NnError> {
        if buffers.len() != self.velocity.len() {
            return Err(NnError::ParamGradMismatch {
                params: self.velocity.len(),
                grads: buffers.len(),
            });
        }
        for (v, buf) in self.velocity.iter_mut().zip(buffers) {
            for (dst, &src) in v.data_mut().iter_mut().zip(buf) {
                *dst = T::from_f32c(src);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_l2_leaves_params_unchanged() {
        let hyper = AdamHyper::default();
        let mut m = vec![0.0f64; 3];
        let mut v = vec![0.0f64; 3];
        let mut params = vec![1.0f64, -2.0, 0.5];
        let before = params.clone();
        adam_update(&hyper, 1, &mut m, &mut v, &mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let hyper = AdamHyper {
            lr: 0.1,
            ..Default::default()
        };
        let mut m = vec![0.0f64; 3];
        let mut v = vec![0.0f64; 3];
        let mut params = vec![0.0f64; 3];
        let grads = [2.0, -0.5, 1e-3];
        adam_update(&hyper, 1, &mut m, &mut v, &mut params, &grads).unwrap();
        for (p, g) in params.iter().zip(grads) {
            assert!(
                (p + 0.1 * g.signum()).abs() < 1e-4,
                "param {p} for grad {g}"
            );
        }
    }

    #[test]
    fn adam_descends_scalar_parabola() {
        // f(w) = (w - 3)^2, grad = 2(w - 3), lr 0.1, 100 steps.
        let hyper = AdamHyper {
            lr: 0.1,
            ..Default::default()
        };
        let mut m = vec![0.0f64];
        let mut v = vec![0.0f64];
        let mut w = vec![0.0f64];
        for step in 1..=100 {
            let g = [2.0 * (w[0] - 3.0)];
            adam_update(&hyper, step, &mut m, &mut v, &mut w, &g).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.05, "w = {}", w[0]);
    }

    #[test]
    fn l2_changes_the_update() {
        let mut m = vec![0.0f64];
        let mut v = vec![0.0f64];
        let mut w_plain = vec![2.0f64];
        let mut w_l2 = vec![2.0f64];
        adam_update(
            &AdamHyper::default(),
            1,
            &mut m.clone(),
            &mut v.clone(),
            &mut w_plain,
            &[0.1],
        )
        .unwrap();
        adam_update(
            &AdamHyper {
                l2: 0.5,
                ..Default::default()
            },
            1,
            &mut m,
            &mut v,
            &mut w_l2,
            &[0.1],
        )
        .unwrap();
        assert_ne!(w_plain, w_l2);
    }

    #[test]
    fn sgd_examples() {
        let mut w = vec![1.0f64];
        sgd_update(&mut w, &[2.0], 0.5).unwrap();
        assert_eq!(w, vec![0.0]);
        let mut w = vec![1.0f64, -4.0];
        let before = w.clone();
        sgd_update(&mut w, &[3.0, 7.0], 0.0).unwrap();
        assert_eq!(w, before, "lr = 0 leaves params unchanged");
    }

    #[test]
    fn sgd_descends_scalar_parabola() {
        let mut w = vec![0.0f64];
        for _ in 0..100 {
            let g = [2.0 * (w[0] - 3.0)];
            sgd_update(&mut w, &g, 0.1).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.05, "w = {}", w[0]);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut w = vec![1.0f64; 3];
        assert!(matches!(
            sgd_update(&mut w, &[1.0; 2], 0.1),
            Err(NnError::ParamGradMismatch { params: 3, grads: 2 })
        ));
    }
}
