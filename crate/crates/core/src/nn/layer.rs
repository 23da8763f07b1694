//! Layer kinds, shape algebra, and forward/backward kernels.
//!
//! Activations flow as [channels, height, width] tensors until a `Flatten`;
//! `Dense` and `Softmax` work on flat vectors. All convolutions are stride 1.
//! Backward accumulates parameter gradients (callers zero them per batch)
//! and returns the gradient with respect to the layer input.

use super::{axpy, dot, NnError, Scalar, TensorND};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output spans the same positions as the input; odd kernels only.
    Same,
    /// No padding; output shrinks by kernel-1.
    Valid,
}

/// Declarative layer description; output shape is a total function of the
/// input shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        padding: Padding,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Sigmoid,
    MaxPool2d {
        pool: (usize, usize),
    },
    Upsample2d {
        factor: (usize, usize),
    },
    Embedding {
        vocab: usize,
        dim: usize,
    },
    Softmax,
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Conv2d { .. } => "conv2d",
            Self::Dense { .. } => "dense",
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
            Self::MaxPool2d { .. } => "maxpool2d",
            Self::Upsample2d { .. } => "upsample2d",
            Self::Embedding { .. } => "embedding",
            Self::Softmax => "softmax",
            Self::Flatten => "flatten",
        }
    }

    /// Output shape for `input`, or an error when the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = || NnError::ShapeMismatch {
            expected: self.expected_input_hint(),
            got: input.to_vec(),
        };
        match *self {
            Self::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                padding,
            } => {
                let [c, h, w] = *three(input).ok_or_else(mismatch)?;
                if c != in_channels {
                    return Err(mismatch());
                }
                match padding {
                    Padding::Same => {
                        if kh % 2 == 0 || kw % 2 == 0 {
                            return Err(NnError::BadLayer {
                                layer: 0,
                                kind: "conv2d".into(),
                                detail: "same-padding requires odd kernel extents".into(),
                            });
                        }
                        Ok(vec![out_channels, h, w])
                    }
                    Padding::Valid => {
                        if h < kh || w < kw {
                            return Err(mismatch());
                        }
                        Ok(vec![out_channels, h - kh + 1, w - kw + 1])
                    }
                }
            }
            Self::Dense {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(mismatch());
                }
                Ok(vec![out_features])
            }
            Self::Relu | Self::Sigmoid => Ok(input.to_vec()),
            Self::MaxPool2d { pool: (ph, pw) } => {
                let [c, h, w] = *three(input).ok_or_else(mismatch)?;
                if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
                    return Err(mismatch());
                }
                Ok(vec![c, h / ph, w / pw])
            }
            Self::Upsample2d { factor: (fh, fw) } => {
                let [c, h, w] = *three(input).ok_or_else(mismatch)?;
                if fh == 0 || fw == 0 {
                    return Err(mismatch());
                }
                Ok(vec![c, h * fh, w * fw])
            }
            Self::Embedding { dim, .. } => {
                if input != [1] {
                    return Err(mismatch());
                }
                Ok(vec![dim])
            }
            Self::Softmax => {
                if input.len() != 1 {
                    return Err(mismatch());
                }
                Ok(input.to_vec())
            }
            Self::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn expected_input_hint(&self) -> Vec<usize> {
        match *self {
            Self::Conv2d { in_channels, .. } => vec![in_channels, 0, 0],
            Self::Dense { in_features, .. } => vec![in_features],
            Self::Embedding { .. } => vec![1],
            _ => vec![],
        }
    }

    /// (weights shape, bias shape) for trainable kinds.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Self::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                ..
            } => Some((vec![out_channels, in_channels, kh, kw], vec![out_channels])),
            // Dense weights live transposed as [in, out] so the forward pass
            // walks contiguous output rows.
            Self::Dense {
                in_features,
                out_features,
            } => Some((vec![in_features, out_features], vec![out_features])),
            Self::Embedding { vocab, dim } => Some((vec![vocab, dim], vec![])),
            _ => None,
        }
    }

    /// ReLU follows He-style fan-in init; everything else Glorot.
    pub fn fan_in_out(&self) -> Option<(usize, usize)> {
        match *self {
            Self::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                ..
            } => Some((in_channels * kh * kw, out_channels * kh * kw)),
            Self::Dense {
                in_features,
                out_features,
            } => Some((in_features, out_features)),
            Self::Embedding { vocab, dim } => Some((vocab, dim)),
            _ => None,
        }
    }
}

fn three(shape: &[usize]) -> Option<&[usize; 3]> {
    shape.try_into().ok()
}

/// A layer instance: spec, parameters, gradients, and forward caches.
#[derive(Debug, Clone)]
pub struct Layer<T = f32> {
    pub spec: LayerSpec,
    pub weights: TensorND<T>,
    pub bias: TensorND<T>,
    pub grad_weights: TensorND<T>,
    pub grad_bias: TensorND<T>,
    cache_input: Option<TensorND<T>>,
    cache_output: Option<TensorND<T>>,
    cache_argmax: Vec<usize>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec) -> Self {
        let (wshape, bshape) = spec.param_shapes().unwrap_or((vec![0], vec![0]));
        Self {
            spec,
            weights: TensorND::zeros(&wshape),
            bias: TensorND::zeros(&bshape),
            grad_weights: TensorND::zeros(&wshape),
            grad_bias: TensorND::zeros(&bshape),
            cache_input: None,
            cache_output: None,
            cache_argmax: Vec::new(),
        }
    }

    pub fn zero_grads(&mut self) {
        self.grad_weights.fill(T::zero());
        self.grad_bias.fill(T::zero());
    }

    pub fn param_count(&self) -> usize {
        let has = self.spec.param_shapes().is_some();
        if has {
            self.weights.len() + self.bias.len()
        } else {
            0
        }
    }

    pub fn forward(&mut self, input: &TensorND<T>, cache: bool) -> Result<TensorND<T>, NnError> {
        let out_shape = self.spec.output_shape(input.shape())?;
        let output = match &self.spec {
            LayerSpec::Conv2d {
                kernel, padding, ..
            } => self.conv_forward(input, &out_shape, *kernel, *padding),
            LayerSpec::Dense { .. } => self.dense_forward(input, &out_shape),
            LayerSpec::Relu => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
                out
            }
            LayerSpec::Sigmoid => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    *v = T::one() / (T::one() + (-*v).exp());
                }
                out
            }
            LayerSpec::MaxPool2d { pool } => self.pool_forward(input, &out_shape, *pool, cache),
            LayerSpec::Upsample2d { factor } => upsample_forward(input, &out_shape, *factor),
            LayerSpec::Embedding { vocab, dim } => {
                let idx = input.data()[0].to_f64c().round();
                if !(idx >= 0.0 && (idx as usize) < *vocab) {
                    return Err(NnError::BadLabel {
                        label: idx as usize,
                        classes: *vocab,
                    });
                }
                let idx = idx as usize;
                let row = &self.weights.data()[idx * dim..(idx + 1) * dim];
                TensorND::new(out_shape.clone(), row.to_vec())?
            }
            LayerSpec::Softmax => {
                let mut out = input.clone();
                let max = out
                    .data()
                    .iter()
                    .cloned()
                    .fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for v in out.data_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in out.data_mut() {
                    *v = *v / sum;
                }
                out
            }
            LayerSpec::Flatten => input.reshaped(&out_shape)?,
        };
        if cache {
            match self.spec {
                // Sigmoid and softmax backward need the output; the rest the input.
                LayerSpec::Sigmoid | LayerSpec::Softmax => {
                    self.cache_input = Some(input.clone());
                    self.cache_output = Some(output.clone());
                }
                _ => {
                    self.cache_input = Some(input.clone());
                    self.cache_output = None;
                }
            }
        }
        Ok(output)
    }

    /// Accumulates parameter gradients and returns d(loss)/d(input).
    pub fn backward(&mut self, upstream: &TensorND<T>) -> Result<TensorND<T>, NnError> {
        let input = self.cache_input.take().ok_or(NnError::MissingForward)?;
        let expect = self.spec.output_shape(input.shape())?;
        if upstream.shape() != expect.as_slice() {
            self.cache_input = Some(input);
            return Err(NnError::ShapeMismatch {
                expected: expect,
                got: upstream.shape().to_vec(),
            });
        }
        let grad_input = match &self.spec {
            LayerSpec::Conv2d {
                kernel, padding, ..
            } => self.conv_backward(&input, upstream, *kernel, *padding),
            LayerSpec::Dense { .. } => self.dense_backward(&input, upstream),
            LayerSpec::Relu => {
                let mut g = upstream.clone();
                for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
                    if xv <= T::zero() {
                        *gv = T::zero();
                    }
                }
                g
            }
            LayerSpec::Sigmoid => {
                let y = self.cache_output.take().ok_or(NnError::MissingForward)?;
                let mut g = upstream.clone();
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = *gv * yv * (T::one() - yv);
                }
                g
            }
            LayerSpec::MaxPool2d { .. } => {
                let mut g = TensorND::zeros(input.shape());
                for (o, &src) in self.cache_argmax.iter().enumerate() {
                    g.data_mut()[src] += upstream.data()[o];
                }
                g
            }
            LayerSpec::Upsample2d { factor } => upsample_backward(&input, upstream, *factor),
            LayerSpec::Embedding { dim, .. } => {
                let idx = input.data()[0].to_f64c().round() as usize;
                let row = &mut self.grad_weights.data_mut()[idx * dim..(idx + 1) * dim];
                for (r, &u) in row.iter_mut().zip(upstream.data()) {
                    *r += u;
                }
                TensorND::zeros(&[1])
            }
            LayerSpec::Softmax => {
                let y = self.cache_output.take().ok_or(NnError::MissingForward)?;
                // dx_i = y_i * (dy_i - sum_j dy_j y_j)
                let inner = dot(upstream.data(), y.data());
                let mut g = upstream.clone();
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = yv * (*gv - inner);
                }
                g
            }
            LayerSpec::Flatten => upstream.reshaped(input.shape())?,
        };
        Ok(grad_input)
    }

    fn conv_forward(
        &self,
        input: &TensorND<T>,
        out_shape: &[usize],
        (kh, kw): (usize, usize),
        padding: Padding,
    ) -> TensorND<T> {
        let [ic, ih, iw] = *three(input.shape()).expect("validated");
        let [oc, oh, ow] = *three(out_shape).expect("validated");
        let (ph, pw) = match padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (0, 0),
        };
        let mut out = TensorND::zeros(out_shape);
        let w = self.weights.data();
        let x = input.data();
        let out_data = out.data_mut();
        for o in 0..oc {
            let plane = &mut out_data[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(self.bias.data()[o]);
            for c in 0..ic {
                for ky in 0..kh {
                    for oy in 0..oh {
                        let iy = oy + ky;
                        if iy < ph || iy - ph >= ih {
                            continue;
                        }
                        let in_row = &x[(c * ih + (iy - ph)) * iw..][..iw];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        for kx in 0..kw {
                            let wv = w[((o * ic + c) * kh + ky) * kw + kx];
                            // valid ox range: 0 <= ox + kx - pw < iw
                            let lo = pw.saturating_sub(kx);
                            let hi = (iw + pw - kx).min(ow);
                            if lo < hi {
                                let src = &in_row[lo + kx - pw..hi + kx - pw];
                                axpy(wv, src, &mut out_row[lo..hi]);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn conv_backward(
        &mut self,
        input: &TensorND<T>,
        upstream: &TensorND<T>,
        (kh, kw): (usize, usize),
        padding: Padding,
    ) -> TensorND<T> {
        let [ic, ih, iw] = *three(input.shape()).expect("validated");
        let [oc, oh, ow] = *three(upstream.shape()).expect("validated");
        let (ph, pw) = match padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (0, 0),
        };
        let mut grad_in = TensorND::zeros(input.shape());
        let w = self.weights.data();
        let gw = self.grad_weights.data_mut();
        let x = input.data();
        let dy = upstream.data();
        let dx = grad_in.data_mut();
        for o in 0..oc {
            let dy_plane = &dy[o * oh * ow..(o + 1) * oh * ow];
            let mut bias_acc = T::zero();
            for v in dy_plane {
                bias_acc += *v;
            }
            self.grad_bias.data_mut()[o] += bias_acc;
            for c in 0..ic {
                for ky in 0..kh {
                    for oy in 0..oh {
                        let iy = oy + ky;
                        if iy < ph || iy - ph >= ih {
                            continue;
                        }
                        let row_base = (c * ih + (iy - ph)) * iw;
                        let dy_row = &dy_plane[oy * ow..(oy + 1) * ow];
                        for kx in 0..kw {
                            let widx = ((o * ic + c) * kh + ky) * kw + kx;
                            let lo = pw.saturating_sub(kx);
                            let hi = (iw + pw - kx).min(ow);
                            if lo < hi {
                                let span = lo + kx - pw..hi + kx - pw;
                                gw[widx] += dot(&x[row_base..][span.clone()], &dy_row[lo..hi]);
                                axpy(
                                    w[widx],
                                    &dy_row[lo..hi],
                                    &mut dx[row_base..row_base + iw][span],
                                );
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    fn dense_forward(&self, input: &TensorND<T>, out_shape: &[usize]) -> TensorND<T> {
        let out_n = out_shape[0];
        let mut out = TensorND::zeros(out_shape);
        out.data_mut().copy_from_slice(self.bias.data());
        for (k, &xv) in input.data().iter().enumerate() {
            let row = &self.weights.data()[k * out_n..(k + 1) * out_n];
            axpy(xv, row, out.data_mut());
        }
        out
    }

    fn dense_backward(&mut self, input: &TensorND<T>, upstream: &TensorND<T>) -> TensorND<T> {
        let out_n = upstream.len();
        let mut grad_in = TensorND::zeros(input.shape());
        for (b, &u) in self.grad_bias.data_mut().iter_mut().zip(upstream.data()) {
            *b += u;
        }
        for (k, gi) in grad_in.data_mut().iter_mut().enumerate() {
            let row = &self.weights.data()[k * out_n..(k + 1) * out_n];
            *gi = dot(upstream.data(), row);
        }
        for (k, &xv) in input.data().iter().enumerate() {
            let grow = &mut self.grad_weights.data_mut()[k * out_n..(k + 1) * out_n];
            axpy(xv, upstream.data(), grow);
        }
        grad_in
    }

    fn pool_forward(
        &mut self,
        input: &TensorND<T>,
        out_shape: &[usize],
        (ph, pw): (usize, usize),
        cache: bool,
    ) -> TensorND<T> {
        let [_, ih, iw] = *three(input.shape()).expect("validated");
        let [oc, oh, ow] = *three(out_shape).expect("validated");
        let x = input.data();
        let mut out = TensorND::zeros(out_shape);
        if cache {
            self.cache_argmax.clear();
            self.cache_argmax.reserve(out.len());
        }
        for c in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for dy in 0..ph {
                        for dx_ in 0..pw {
                            let idx = (c * ih + oy * ph + dy) * iw + ox * pw + dx_;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.data_mut()[(c * oh + oy) * ow + ox] = best;
                    if cache {
                        self.cache_argmax.push(best_idx);
                    }
                }
            }
        }
        out
    }
}

fn upsample_forward<T: Scalar>(
    input: &TensorND<T>,
    out_shape: &[usize],
    (fh, fw): (usize, usize),
) -> TensorND<T> {
    let [_, ih, iw] = *three(input.shape()).expect("validated");
    let [oc, oh, ow] = *three(out_shape).expect("validated");
    let mut out = TensorND::zeros(out_shape);
    let x = input.data();
    for c in 0..oc {
        for oy in 0..oh {
            let in_row = &x[(c * ih + oy / fh) * iw..][..iw];
            let out_row = &mut out.data_mut()[(c * oh + oy) * ow..][..ow];
            for (ox, v) in out_row.iter_mut().enumerate() {
                *v = in_row[ox / fw];
            }
        }
    }
    out
}

fn upsample_backward<T: Scalar>(
    input: &TensorND<T>,
    upstream: &TensorND<T>,
    (fh, fw): (usize, usize),
) -> TensorND<T> {
    let [ic, ih, iw] = *three(input.shape()).expect("validated");
    let [_, oh, ow] = *three(upstream.shape()).expect("validated");
    let mut grad = TensorND::zeros(input.shape());
    let dy = upstream.data();
    for c in 0..ic {
        for oy in 0..oh {
            let dy_row = &dy[(c * oh + oy) * ow..][..ow];
            let g_row = &mut grad.data_mut()[(c * ih + oy / fh) * iw..][..iw];
            for (ox, &v) in dy_row.iter().enumerate() {
                g_row[ox / fw] += v;
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor3(c: usize, h: usize, w: usize, f: impl FnMut(usize) -> f64) -> TensorND<f64> {
        TensorND::from_fn(&[c, h, w], f)
    }

    #[test]
    fn dirac_kernel_same_padding_is_identity() {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: (1, 3),
            padding: Padding::Same,
        };
        let mut layer = Layer::<f64>::new(spec);
        layer.weights.data_mut()[1] = 1.0; // center tap
        let x = tensor3(1, 2, 5, |i| i as f64 * 0.5 - 1.0);
        let y = layer.forward(&x, false).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn maxpool_two_by_two() {
        let spec = LayerSpec::MaxPool2d { pool: (2, 2) };
        let mut layer = Layer::<f64>::new(spec);
        let x = TensorND::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = layer.forward(&x, false).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut layer = Layer::<f64>::new(LayerSpec::Softmax);
        let x = TensorND::new(vec![4], vec![0.7; 4]).unwrap();
        let y = layer.forward(&x, false).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut layer = Layer::<f64>::new(LayerSpec::Softmax);
        for case in 0..10 {
            let x = TensorND::from_fn(&[7], |i| ((i * 31 + case * 17) % 13) as f64 * 0.3 - 2.0);
            let y = layer.forward(&x, false).unwrap();
            let sum: f64 = y.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_gradient_is_outer_product() {
        let spec = LayerSpec::Dense {
            in_features: 3,
            out_features: 2,
        };
        let mut layer = Layer::<f64>::new(spec);
        for (i, v) in layer.weights.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let x = TensorND::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        layer.forward(&x, true).unwrap();
        let delta = TensorND::new(vec![2], vec![0.25, -0.75]).unwrap();
        layer.backward(&delta).unwrap();
        for k in 0..3 {
            for o in 0..2 {
                let got = layer.grad_weights.data()[k * 2 + o];
                let want = x.data()[k] * delta.data()[o];
                assert!((got - want).abs() < 1e-12, "dW[{k}][{o}]");
            }
        }
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut layer = Layer::<f64>::new(LayerSpec::Relu);
        let g = TensorND::zeros(&[4]);
        assert!(matches!(layer.backward(&g), Err(NnError::MissingForward)));
    }

    #[test]
    fn zero_upstream_gives_zero_param_grads() {
        let spec = LayerSpec::Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel: (1, 3),
            padding: Padding::Same,
        };
        let mut layer = Layer::<f64>::new(spec);
        for (i, v) in layer.weights.data_mut().iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        let x = tensor3(2, 4, 6, |i| (i as f64).cos());
        let y = layer.forward(&x, true).unwrap();
        let zeros = TensorND::zeros(y.shape());
        layer.backward(&zeros).unwrap();
        assert!(layer.grad_weights.data().iter().all(|&g| g == 0.0));
        assert!(layer.grad_bias.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn upsample_then_pool_roundtrips() {
        let mut up = Layer::<f64>::new(LayerSpec::Upsample2d { factor: (1, 2) });
        let mut pool = Layer::<f64>::new(LayerSpec::MaxPool2d { pool: (1, 2) });
        let x = tensor3(2, 2, 3, |i| i as f64);
        let u = up.forward(&x, false).unwrap();
        assert_eq!(u.shape(), &[2, 2, 6]);
        let back = pool.forward(&u, false).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn shape_algebra_catches_mismatches() {
        let spec = LayerSpec::Dense {
            in_features: 8,
            out_features: 4,
        };
        let err = spec.output_shape(&[7]).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }), "{err}");
        let pool = LayerSpec::MaxPool2d { pool: (1, 2) };
        assert!(pool.output_shape(&[1, 4, 5]).is_err(), "odd width must fail");
    }
}
