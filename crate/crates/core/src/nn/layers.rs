//! Layers with explicit forward/backward passes.
//!
//! Each layer caches what its backward pass needs during `forward` and
//! accumulates parameter gradients into [`Param::grad`] during `backward`.

use super::{Scalar, Tensor};

/// A trainable parameter and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub fn conv_out_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

pub fn conv_transpose_out_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input - 1) * stride + kernel - 2 * padding
}

/// Unfold `img` (`c x h x w`) into `col` (`c*k*k x oh*ow`).
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &img[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * ohw..][..ohw];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `col` back into `img` (which is overwritten).
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
    img: &mut [T],
) {
    img.iter_mut().for_each(|v| *v = T::zero());
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &mut img[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * ohw..][..ohw];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution, weights `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(vec![T::zero(); out_channels * in_channels * kernel * kernel]),
            bias: bias.then(|| Param::new(vec![T::zero(); out_channels])),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.in_channels, "conv: input channel mismatch");
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (oh, ow) = (conv_out_size(h, k, s, p), conv_out_size(w, k, s, p));
        let ckk = c * k * k;
        let ohw = oh * ow;
        let mut out = Tensor::zeros([n, self.out_channels, oh, ow]);
        let mut col = vec![T::zero(); ckk * ohw];
        for i in 0..n {
            im2col(x.sample(i), c, h, w, k, s, p, oh, ow, &mut col);
            let y = out.sample_mut(i);
            T::gemm(
                self.out_channels, ckk, ohw,
                T::one(), &self.weight.value, ckk, 1,
                &col, ohw, 1,
                T::zero(), y, ohw, 1,
            );
            if let Some(b) = &self.bias {
                for (o, plane) in y.chunks_mut(ohw).enumerate() {
                    plane.iter_mut().for_each(|v| *v += b.value[o]);
                }
            }
        }
        if train {
            self.input = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("conv backward without cached forward");
        let [n, c, h, w] = x.shape();
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (oh, ow) = (grad_out.height(), grad_out.width());
        let ckk = c * k * k;
        let ohw = oh * ow;
        let mut grad_in = Tensor::zeros(x.shape());
        let mut col = vec![T::zero(); ckk * ohw];
        let mut dcol = vec![T::zero(); ckk * ohw];
        for i in 0..n {
            let dy = grad_out.sample(i);
            im2col(x.sample(i), c, h, w, k, s, p, oh, ow, &mut col);
            // dW += dY @ col^T
            T::gemm(
                self.out_channels, ohw, ckk,
                T::one(), dy, ohw, 1,
                &col, 1, ohw,
                T::one(), &mut self.weight.grad, ckk, 1,
            );
            // dcol = W^T @ dY
            T::gemm(
                ckk, self.out_channels, ohw,
                T::one(), &self.weight.value, 1, ckk,
                dy, ohw, 1,
                T::zero(), &mut dcol, ohw, 1,
            );
            col2im(&dcol, c, h, w, k, s, p, oh, ow, grad_in.sample_mut(i));
            if let Some(b) = &mut self.bias {
                for (o, plane) in dy.chunks(ohw).enumerate() {
                    b.grad[o] += plane.iter().fold(T::zero(), |a, &v| a + v);
                }
            }
        }
        grad_in
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

/// Transposed 2-D convolution, weights `[in, out, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(vec![T::zero(); in_channels * out_channels * kernel * kernel]),
            bias: bias.then(|| Param::new(vec![T::zero(); out_channels])),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.in_channels, "conv transpose: input channel mismatch");
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (oh, ow) = (
            conv_transpose_out_size(h, k, s, p),
            conv_transpose_out_size(w, k, s, p),
        );
        let okk = self.out_channels * k * k;
        let hw = h * w;
        let mut out = Tensor::zeros([n, self.out_channels, oh, ow]);
        let mut col = vec![T::zero(); okk * hw];
        for i in 0..n {
            // col = W^T @ x, W viewed as [in, out*k*k]
            T::gemm(
                okk, c, hw,
                T::one(), &self.weight.value, 1, okk,
                x.sample(i), hw, 1,
                T::zero(), &mut col, hw, 1,
            );
            let y = out.sample_mut(i);
            col2im(&col, self.out_channels, oh, ow, k, s, p, h, w, y);
            if let Some(b) = &self.bias {
                for (o, plane) in y.chunks_mut(oh * ow).enumerate() {
                    plane.iter_mut().for_each(|v| *v += b.value[o]);
                }
            }
        }
        if train {
            self.input = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("conv transpose backward without cached forward");
        let [n, c, h, w] = x.shape();
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (oh, ow) = (grad_out.height(), grad_out.width());
        let okk = self.out_channels * k * k;
        let hw = h * w;
        let mut grad_in = Tensor::zeros(x.shape());
        let mut dcol = vec![T::zero(); okk * hw];
        for i in 0..n {
            let dy = grad_out.sample(i);
            im2col(dy, self.out_channels, oh, ow, k, s, p, h, w, &mut dcol);
            // dx = W @ dcol
            T::gemm(
                c, okk, hw,
                T::one(), &self.weight.value, okk, 1,
                &dcol, hw, 1,
                T::zero(), grad_in.sample_mut(i), hw, 1,
            );
            // dW += x @ dcol^T
            T::gemm(
                c, hw, okk,
                T::one(), x.sample(i), hw, 1,
                &dcol, 1, hw,
                T::one(), &mut self.weight.grad, okk, 1,
            );
            if let Some(b) = &mut self.bias {
                for (o, plane) in dy.chunks(oh * ow).enumerate() {
                    b.grad[o] += plane.iter().fold(T::zero(), |a, &v| a + v);
                }
            }
        }
        grad_in
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

/// Per-channel batch normalization over `(N, H, W)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![T::one(); channels]),
            beta: Param::new(vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::of(0.1),
            eps: T::of(1e-5),
            cache: None,
        }
    }

    /// In training mode normalizes with batch statistics and updates the
    /// running averages; otherwise uses the running averages.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels, "batch norm: channel mismatch");
        let hw = h * w;
        let count = n * hw;
        let mut mean = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        if train {
            let cnt = T::of(count as f64);
            for ch in 0..c {
                let mut sum = T::zero();
                for i in 0..n {
                    sum = x.sample(i)[ch * hw..(ch + 1) * hw]
                        .iter()
                        .fold(sum, |a, &v| a + v);
                }
                let m = sum / cnt;
                let mut sq = T::zero();
                for i in 0..n {
                    sq = x.sample(i)[ch * hw..(ch + 1) * hw]
                        .iter()
                        .fold(sq, |a, &v| a + (v - m) * (v - m));
                }
                let var = sq / cnt;
                mean[ch] = m;
                inv_std[ch] = T::one() / (var + self.eps).sqrt();
                let unbiased = if count > 1 {
                    sq / T::of((count - 1) as f64)
                } else {
                    var
                };
                let mo = self.momentum;
                self.running_mean[ch] = (T::one() - mo) * self.running_mean[ch] + mo * m;
                self.running_var[ch] = (T::one() - mo) * self.running_var[ch] + mo * unbiased;
            }
        } else {
            for ch in 0..c {
                mean[ch] = self.running_mean[ch];
                inv_std[ch] = T::one() / (self.running_var[ch] + self.eps).sqrt();
            }
        }
        let mut normalized = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        for i in 0..n {
            let src = x.sample(i);
            let nrm = normalized.sample_mut(i);
            for ch in 0..c {
                let r = ch * hw..(ch + 1) * hw;
                for (d, &v) in nrm[r.clone()].iter_mut().zip(&src[r]) {
                    *d = (v - mean[ch]) * inv_std[ch];
                }
            }
            let dst = out.sample_mut(i);
            for ch in 0..c {
                let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                let r = ch * hw..(ch + 1) * hw;
                for (d, &v) in dst[r.clone()].iter_mut().zip(&nrm[r]) {
                    *d = g * v + b;
                }
            }
        }
        self.cache = Some(BnCache {
            normalized,
            inv_std,
            batch_stats: train,
        });
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.take().expect("batch norm backward without forward");
        let [n, c, h, w] = grad_out.shape();
        let hw = h * w;
        let cnt = T::of((n * hw) as f64);
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for i in 0..n {
                let r = ch * hw..(ch + 1) * hw;
                for (&dy, &xh) in grad_out.sample(i)[r.clone()]
                    .iter()
                    .zip(&cache.normalized.sample(i)[r])
                {
                    sum_dy += dy;
                    sum_dy_xhat += dy * xh;
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let scale = self.gamma.value[ch] * cache.inv_std[ch];
            for i in 0..n {
                let r = ch * hw..(ch + 1) * hw;
                let xh = &cache.normalized.sample(i)[r.clone()];
                let dy = &grad_out.sample(i)[r.clone()];
                let dx = &mut grad_in.sample_mut(i)[r];
                if cache.batch_stats {
                    for j in 0..hw {
                        dx[j] = scale * (dy[j] - sum_dy / cnt - xh[j] * sum_dy_xhat / cnt);
                    }
                } else {
                    for j in 0..hw {
                        dx[j] = scale * dy[j];
                    }
                }
            }
        }
        grad_in
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            // written out so NaN propagates instead of clamping to zero
            Activation::Relu => {
                if x < T::zero() {
                    T::zero()
                } else {
                    x
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

/// Activation layer caching its output for the backward pass.
#[derive(Debug, Clone)]
pub struct ActivationLayer<T> {
    pub kind: Activation,
    output: Option<Tensor<T>>,
}

impl<T: Scalar> ActivationLayer<T> {
    pub fn new(kind: Activation) -> Self {
        Self { kind, output: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let kind = self.kind;
        let y = x.map(|v| kind.apply(v));
        if train {
            self.output = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let y = self.output.take().expect("activation backward without forward");
        let kind = self.kind;
        let data = grad_out
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &o)| g * kind.derivative_from_output(o))
            .collect();
        Tensor::from_vec(grad_out.shape(), data)
    }
}

/// Fully-connected layer on `[n, in, 1, 1]` tensors, weights `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::new(vec![T::zero(); in_features * out_features]),
            bias: Param::new(vec![T::zero(); out_features]),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let n = x.batch();
        assert_eq!(x.sample_len(), self.in_features, "linear: input size mismatch");
        let (fi, fo) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros([n, fo, 1, 1]);
        for row in out.data_mut().chunks_mut(fo) {
            row.copy_from_slice(&self.bias.value);
        }
        // Y = X @ W^T + b
        T::gemm(
            n, fi, fo,
            T::one(), x.data(), fi, 1,
            &self.weight.value, 1, fi,
            T::one(), out.data_mut(), fo, 1,
        );
        if train {
            self.input = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("linear backward without forward");
        let n = x.batch();
        let (fi, fo) = (self.in_features, self.out_features);
        // dW += dY^T @ X
        T::gemm(
            fo, n, fi,
            T::one(), grad_out.data(), 1, fo,
            x.data(), fi, 1,
            T::one(), &mut self.weight.grad, fi, 1,
        );
        for row in grad_out.data().chunks(fo) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut grad_in = Tensor::zeros(x.shape());
        // dX = dY @ W
        T::gemm(
            n, fo, fi,
            T::one(), grad_out.data(), fo, 1,
            &self.weight.value, fi, 1,
            T::zero(), grad_in.data_mut(), fi, 1,
        );
        grad_in
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
