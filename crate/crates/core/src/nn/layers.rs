//! Parameterised layers and the parameter-free ops between them.

use rand::Rng;
use rand_distr::StandardNormal;

use super::ops::{self, axpy, dot};
use super::scalar::Scalar;
use super::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub velocity: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let n = value.len();
        Param {
            value,
            grad: vec![T::zero(); n],
            velocity: vec![T::zero(); n],
        }
    }

    pub fn constant(len: usize, v: T) -> Self {
        Param::new(vec![v; len])
    }

    /// Fan-in scaled Gaussian, std = sqrt(2 / fan_in).
    pub fn he_normal<R: Rng>(len: usize, fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let value = (0..len)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                T::of(z * std)
            })
            .collect();
        Param::new(value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Nesterov SGD with L2 weight decay; clears the gradient afterwards.
    pub fn sgd_nesterov(&mut self, lr: T, momentum: T, weight_decay: T) {
        for ((w, g), v) in self
            .value
            .iter_mut()
            .zip(self.grad.iter_mut())
            .zip(self.velocity.iter_mut())
        {
            let d = *g + weight_decay * *w;
            *v = momentum * *v + d;
            *w -= lr * (d + momentum * *v);
            *g = T::zero();
        }
    }
}

/// 3x3 convolution with padding 1 and no bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3x3<T> {
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub weight: Param<T>,
}

impl<T: Scalar> Conv3x3<T> {
    pub fn new<R: Rng>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        Conv3x3 {
            cin,
            cout,
            stride,
            weight: Param::he_normal(cout * cin * 9, cin * 9, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        debug_assert_eq!(c, self.cin);
        let (ho, wo) = ops::conv_out(h, w, self.stride);
        let hw = ho * wo;
        let k = self.cin * 9;
        let mut out = Tensor::zeros([n, self.cout, ho, wo]);
        let mut col = vec![T::zero(); k * hw];
        for i in 0..n {
            ops::im2col(x.sample(i), c, h, w, self.stride, &mut col);
            ops::gemm_rows(&self.weight.value, &col, k, hw, out.sample_mut(i));
        }
        out
    }

    /// Accumulates the weight gradient; returns the input gradient when asked.
    pub fn backward(&mut self, x: &Tensor<T>, dout: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        let hw = dout.plane();
        let k = self.cin * 9;
        let mut col = vec![T::zero(); k * hw];
        let mut dcol = vec![T::zero(); k * hw];
        let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
        let mut wt = Vec::new();
        if need_dx {
            wt = vec![T::zero(); k * self.cout];
            for co in 0..self.cout {
                for kk in 0..k {
                    wt[kk * self.cout + co] = self.weight.value[co * k + kk];
                }
            }
        }
        for i in 0..n {
            ops::im2col(x.sample(i), c, h, w, self.stride, &mut col);
            let dy = dout.sample(i);
            for co in 0..self.cout {
                let dyc = &dy[co * hw..(co + 1) * hw];
                let g = &mut self.weight.grad[co * k..(co + 1) * k];
                for (kk, gk) in g.iter_mut().enumerate() {
                    *gk += dot(dyc, &col[kk * hw..(kk + 1) * hw]);
                }
            }
            if let Some(dx) = dx.as_mut() {
                ops::gemm_rows(&wt, dy, self.cout, hw, &mut dcol);
                ops::col2im(&dcol, c, h, w, self.stride, dx.sample_mut(i));
            }
        }
        dx
    }

    /// Multiply-accumulates for one sample at the given input size.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (ho, wo) = ops::conv_out(h, w, self.stride);
        (ho * wo * self.cout * self.cin * 9) as u64
    }
}

/// Batch statistics kept from a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

/// Per-channel batch normalisation with affine scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Param::constant(channels, T::one()),
            beta: Param::constant(channels, T::zero()),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    /// Normalise with the batch's own statistics.
    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let [n, c, _, _] = x.shape();
        let plane = x.plane();
        let (mean, var) = ops::channel_moments(x.data(), n, c, plane);
        let inv_std: Vec<T> = var.iter().map(|&v| T::of(1.0 / (v + BN_EPS).sqrt())).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * plane;
                let (m, s) = (T::of(mean[ch]), inv_std[ch]);
                let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                let src = &x.data()[base..base + plane];
                let xh = &mut xhat.data_mut()[base..base + plane];
                for (o, &v) in xh.iter_mut().zip(src) {
                    *o = (v - m) * s;
                }
                let dst = &mut y.data_mut()[base..base + plane];
                for (o, &v) in dst.iter_mut().zip(xh.iter()) {
                    *o = g * v + b;
                }
            }
        }
        let cache = BnCache {
            xhat,
            inv_std,
            mean,
            var,
            count: n * plane,
        };
        (y, cache)
    }

    /// Normalise with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, _, _] = x.shape();
        let plane = x.plane();
        let mut y = Tensor::zeros(x.shape());
        for ch in 0..c {
            let s = T::one() / (self.running_var[ch] + T::of(BN_EPS)).sqrt();
            let scale = self.gamma.value[ch] * s;
            let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
            for i in 0..n {
                let base = (i * c + ch) * plane;
                let src = &x.data()[base..base + plane];
                for (o, &v) in y.data_mut()[base..base + plane].iter_mut().zip(src) {
                    *o = v * scale + shift;
                }
            }
        }
        y
    }

    /// Exponential update: `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&mut self, cache: &BnCache<T>, momentum: f64) {
        for ch in 0..self.channels {
            let rm = self.running_mean[ch].as_f64();
            let rv = self.running_var[ch].as_f64();
            self.running_mean[ch] = T::of((1.0 - momentum) * rm + momentum * cache.mean[ch]);
            self.running_var[ch] = T::of((1.0 - momentum) * rv + momentum * cache.var[ch]);
        }
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let [n, c, _, _] = dy.shape();
        let plane = dy.plane();
        let count = cache.count as f64;
        let mut dx = Tensor::zeros(dy.shape());
        for ch in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for i in 0..n {
                let base = (i * c + ch) * plane;
                let d = &dy.data()[base..base + plane];
                let xh = &cache.xhat.data()[base..base + plane];
                sum_dy += ops::lane_sum_f64(d, d, |a, _| a);
                sum_dy_xhat += ops::lane_sum_f64(d, xh, |a, b| a * b);
            }
            self.gamma.grad[ch] += T::of(sum_dy_xhat);
            self.beta.grad[ch] += T::of(sum_dy);
            let g = self.gamma.value[ch];
            let k = g * cache.inv_std[ch] / T::of(count);
            let mean_term = T::of(sum_dy);
            let xhat_term = T::of(sum_dy_xhat);
            for i in 0..n {
                let base = (i * c + ch) * plane;
                let d = &dy.data()[base..base + plane];
                let xh = &cache.xhat.data()[base..base + plane];
                let out = &mut dx.data_mut()[base..base + plane];
                for ((o, &dv), &xv) in out.iter_mut().zip(d).zip(xh) {
                    *o = k * (T::of(count) * dv - mean_term - xv * xhat_term);
                }
            }
        }
        dx
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            inputs,
            outputs,
            weight: Param::he_normal(outputs * inputs, inputs, rng),
            bias: Param::constant(outputs, T::zero()),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let n = x.batch();
        let mut y = Tensor::zeros([n, self.outputs, 1, 1]);
        for i in 0..n {
            let xi = x.row(i);
            let yi = y.sample_mut(i);
            for (o, out) in yi.iter_mut().enumerate() {
                let wrow = &self.weight.value[o * self.inputs..(o + 1) * self.inputs];
                *out = self.bias.value[o] + dot(wrow, xi);
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let n = x.batch();
        let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
        for i in 0..n {
            let xi = x.row(i);
            let dyi = dy.row(i);
            for (o, &d) in dyi.iter().enumerate() {
                let range = o * self.inputs..(o + 1) * self.inputs;
                axpy(&mut self.weight.grad[range.clone()], d, xi);
                self.bias.grad[o] += d;
                if let Some(dx) = dx.as_mut() {
                    axpy(dx.sample_mut(i), d, &self.weight.value[range]);
                }
            }
        }
        dx
    }

    pub fn macs(&self) -> u64 {
        (self.inputs * self.outputs) as u64
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    let zero = T::zero();
    for v in x.data_mut() {
        if *v < zero {
            *v = zero;
        }
    }
}

/// Zero `dy` wherever the forward output `y` was clamped.
pub fn relu_backward_inplace<T: Scalar>(y: &Tensor<T>, dy: &mut Tensor<T>) {
    let zero = T::zero();
    for (d, &v) in dy.data_mut().iter_mut().zip(y.data()) {
        if v <= zero {
            *d = zero;
        }
    }
}

/// 2x2 max-pool with stride 2; returns the output and the flat argmax of each window.
pub fn maxpool2_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [n, c, h, w] = x.shape();
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, ho, wo]);
    let mut arg = vec![0u32; n * c * ho * wo];
    let xs = x.data();
    for p in 0..n * c {
        let src = &xs[p * h * w..(p + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = (2 * oy) * w + 2 * ox;
                for idx in [
                    (2 * oy) * w + 2 * ox + 1,
                    (2 * oy + 1) * w + 2 * ox,
                    (2 * oy + 1) * w + 2 * ox + 1,
                ] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = (p * ho + oy) * wo + ox;
                y.data_mut()[o] = src[best];
                arg[o] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<T: Scalar>(in_shape: [usize; 4], arg: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let [_, _, h, w] = in_shape;
    let plane_out = dy.plane();
    let mut dx = Tensor::zeros(in_shape);
    for (o, (&a, &d)) in arg.iter().zip(dy.data()).enumerate() {
        let p = o / plane_out;
        dx.data_mut()[p * h * w + a as usize] += d;
    }
    dx
}

pub fn global_avgpool_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    let plane = x.plane();
    let inv = T::of(1.0 / plane as f64);
    let mut y = Tensor::zeros([n, c, 1, 1]);
    for (p, out) in y.data_mut().iter_mut().enumerate() {
        let s: T = x.data()[p * plane..(p + 1) * plane].iter().copied().sum();
        *out = s * inv;
    }
    y
}

pub fn global_avgpool_backward<T: Scalar>(in_shape: [usize; 4], dy: &Tensor<T>) -> Tensor<T> {
    let plane = in_shape[2] * in_shape[3];
    let inv = T::of(1.0 / plane as f64);
    let mut dx = Tensor::zeros(in_shape);
    for (p, &d) in dy.data().iter().enumerate() {
        dx.data_mut()[p * plane..(p + 1) * plane].fill(d * inv);
    }
    dx
}

/// Parameter-free residual shortcut: identity, or strided subsampling with
/// zero-padded extra channels when the block changes shape.
pub fn shortcut_forward<T: Scalar>(x: &Tensor<T>, cout: usize, stride: usize) -> Tensor<T> {
    let [n, cin, h, w] = x.shape();
    if stride == 1 && cin == cout {
        return x.clone();
    }
    let (ho, wo) = ((h - 1) / stride + 1, (w - 1) / stride + 1);
    let mut y = Tensor::zeros([n, cout, ho, wo]);
    for i in 0..n {
        for c in 0..cin.min(cout) {
            for oy in 0..ho {
                for ox in 0..wo {
                    let v = x.data()[((i * cin + c) * h + oy * stride) * w + ox * stride];
                    y.data_mut()[((i * cout + c) * ho + oy) * wo + ox] = v;
                }
            }
        }
    }
    y
}

pub fn shortcut_backward<T: Scalar>(in_shape: [usize; 4], dy: &Tensor<T>, stride: usize) -> Tensor<T> {
    let [n, cin, h, w] = in_shape;
    let [_, cout, ho, wo] = dy.shape();
    if stride == 1 && cin == cout {
        return dy.clone();
    }
    let mut dx = Tensor::zeros(in_shape);
    for i in 0..n {
        for c in 0..cin.min(cout) {
            for oy in 0..ho {
                for ox in 0..wo {
                    let v = dy.data()[((i * cout + c) * ho + oy) * wo + ox];
                    dx.data_mut()[((i * cin + c) * h + oy * stride) * w + ox * stride] += v;
                }
            }
        }
    }
    dx
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> (f64, Tensor<T>) {
    let n = logits.batch();
    let k = logits.sample_len();
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0f64;
    for i in 0..n {
        let z = logits.row(i);
        let zmax = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = z.iter().map(|v| (v.as_f64() - zmax).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + zmax - z[labels[i]].as_f64();
        let g = grad.sample_mut(i);
        for j in 0..k {
            let p = exps[j] / sum;
            let t = if j == labels[i] { 1.0 } else { 0.0 };
            g[j] = T::of((p - t) / n as f64);
        }
    }
    (loss / n as f64, grad)
}
