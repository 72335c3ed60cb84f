//! Encoder-decoder deraining network.
//!
//! The encoder is a stack of stride-2 convolutions (DCGAN discriminator
//! style) ending in a sigmoid-activated `1 x 1` latent code. The decoder
//! mirrors it with transposed convolutions; after every upsampling step the
//! same-resolution encoder feature is concatenated and a `1 x 1` convolution
//! restores the scheduled channel count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    conv_out_size, conv_transpose_out_size, init_normal, Activation, ActivationLayer, BatchNorm2d,
    Conv2d, ConvTranspose2d, Param, Scalar, Tensor,
};

/// Standard deviation of the `N(0, std)` weight initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub resolution: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    pub latent_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            resolution: 256,
            base_channels: 64,
            channel_cap: 512,
            latent_channels: 512,
            in_channels: 3,
            out_channels: 3,
        }
    }
}

impl ArchConfig {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.resolution.is_power_of_two() || self.resolution < 16 {
            return Err(Error::Config(format!(
                "resolution must be a power of two >= 16, got {}",
                self.resolution
            )));
        }
        for (name, v) in [
            ("base_channels", self.base_channels),
            ("channel_cap", self.channel_cap),
            ("latent_channels", self.latent_channels),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of stride-2 encoder stages: `log2(resolution) - 2`.
    pub fn stages(&self) -> usize {
        self.resolution.trailing_zeros() as usize - 2
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        let scaled = self
            .base_channels
            .checked_shl(stage as u32)
            .unwrap_or(usize::MAX);
        scaled.min(self.channel_cap)
    }

    pub fn channel_schedule(&self) -> Vec<usize> {
        (0..self.stages()).map(|i| self.stage_channels(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    /// `1 x 1` convolution applied to `[upsampled | encoder skip]`.
    SkipFuse,
}

/// One row of the architecture table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub normalized: bool,
    pub activation: Activation,
    pub spatial_in: usize,
    pub spatial_out: usize,
}

impl LayerSpec {
    /// Layers without normalization carry a bias.
    pub fn has_bias(&self) -> bool {
        !self.normalized
    }

    pub fn parameter_count(&self) -> usize {
        let weights = self.in_channels * self.out_channels * self.kernel * self.kernel;
        let bias = if self.has_bias() { self.out_channels } else { 0 };
        let norm = if self.normalized { 2 * self.out_channels } else { 0 };
        weights + bias + norm
    }
}

pub type LayerTable = Vec<LayerSpec>;

/// Encoder and decoder layer tables for `cfg`.
pub fn build_layer_table(cfg: &ArchConfig) -> Result<(LayerTable, LayerTable)> {
    cfg.validate()?;
    let n = cfg.stages();
    let mut encoder = Vec::with_capacity(n + 1);
    let mut spatial = cfg.resolution;
    let mut channels = cfg.in_channels;
    for stage in 0..n {
        let out = cfg.stage_channels(stage);
        let next = conv_out_size(spatial, 4, 2, 1);
        encoder.push(LayerSpec {
            kind: LayerKind::Conv,
            in_channels: channels,
            out_channels: out,
            kernel: 4,
            stride: 2,
            padding: 1,
            normalized: stage != 0,
            activation: Activation::Relu,
            spatial_in: spatial,
            spatial_out: next,
        });
        channels = out;
        spatial = next;
    }
    encoder.push(LayerSpec {
        kind: LayerKind::Conv,
        in_channels: channels,
        out_channels: cfg.latent_channels,
        kernel: 4,
        stride: 1,
        padding: 0,
        normalized: true,
        activation: Activation::Sigmoid,
        spatial_in: spatial,
        spatial_out: conv_out_size(spatial, 4, 1, 0),
    });

    let mut decoder = Vec::with_capacity(2 * n + 1);
    let mut channels = cfg.latent_channels;
    let mut spatial = 1;
    for stage in (0..n).rev() {
        let out = cfg.stage_channels(stage);
        let (k, s, p) = if stage == n - 1 { (4, 1, 0) } else { (4, 2, 1) };
        let next = conv_transpose_out_size(spatial, k, s, p);
        decoder.push(LayerSpec {
            kind: LayerKind::ConvTranspose,
            in_channels: channels,
            out_channels: out,
            kernel: k,
            stride: s,
            padding: p,
            normalized: true,
            activation: Activation::Relu,
            spatial_in: spatial,
            spatial_out: next,
        });
        decoder.push(LayerSpec {
            kind: LayerKind::SkipFuse,
            in_channels: 2 * out,
            out_channels: out,
            kernel: 1,
            stride: 1,
            padding: 0,
            normalized: true,
            activation: Activation::Relu,
            spatial_in: next,
            spatial_out: next,
        });
        channels = out;
        spatial = next;
    }
    decoder.push(LayerSpec {
        kind: LayerKind::ConvTranspose,
        in_channels: channels,
        out_channels: cfg.out_channels,
        kernel: 4,
        stride: 2,
        padding: 1,
        normalized: false,
        activation: Activation::Tanh,
        spatial_in: spatial,
        spatial_out: conv_transpose_out_size(spatial, 4, 2, 1),
    });
    Ok((encoder, decoder))
}

/// Closed-form trainable parameter count over the layer table.
pub fn parameter_count(cfg: &ArchConfig) -> Result<usize> {
    let (enc, dec) = build_layer_table(cfg)?;
    Ok(enc.iter().chain(&dec).map(LayerSpec::parameter_count).sum())
}

/// Encoder features captured after each stride-2 stage, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipBundle<T> {
    pub features: Vec<Tensor<T>>,
}

impl<T: Scalar> SkipBundle<T> {
    pub fn spatial_sizes(&self) -> Vec<usize> {
        self.features.iter().map(|t| t.height()).collect()
    }
}

#[derive(Debug, Clone)]
enum ConvOp<T> {
    Conv(Conv2d<T>),
    Transpose(ConvTranspose2d<T>),
}

/// Convolution + optional batch norm + activation.
#[derive(Debug, Clone)]
struct Block<T> {
    spec: LayerSpec,
    op: ConvOp<T>,
    norm: Option<BatchNorm2d<T>>,
    act: ActivationLayer<T>,
}

impl<T: Scalar> Block<T> {
    fn new(spec: LayerSpec) -> Self {
        let op = match spec.kind {
            LayerKind::Conv | LayerKind::SkipFuse => ConvOp::Conv(Conv2d::new(
                spec.in_channels,
                spec.out_channels,
                spec.kernel,
                spec.stride,
                spec.padding,
                spec.has_bias(),
            )),
            LayerKind::ConvTranspose => ConvOp::Transpose(ConvTranspose2d::new(
                spec.in_channels,
                spec.out_channels,
                spec.kernel,
                spec.stride,
                spec.padding,
                spec.has_bias(),
            )),
        };
        Self {
            spec,
            op,
            norm: spec.normalized.then(|| BatchNorm2d::new(spec.out_channels)),
            act: ActivationLayer::new(spec.activation),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let y = match &mut self.op {
            ConvOp::Conv(c) => c.forward(x, train),
            ConvOp::Transpose(c) => c.forward(x, train),
        };
        let y = match &mut self.norm {
            Some(bn) => bn.forward(&y, train),
            None => y,
        };
        self.act.forward(&y, train)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let g = self.act.backward(grad);
        let g = match &mut self.norm {
            Some(bn) => bn.backward(&g),
            None => g,
        };
        match &mut self.op {
            ConvOp::Conv(c) => c.backward(&g),
            ConvOp::Transpose(c) => c.backward(&g),
        }
    }

    fn weights_mut(&mut self) -> Vec<&mut Param<T>> {
        match &mut self.op {
            ConvOp::Conv(c) => c.params_mut(),
            ConvOp::Transpose(c) => c.params_mut(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = match &mut self.op {
            ConvOp::Conv(c) => c.params_mut(),
            ConvOp::Transpose(c) => c.params_mut(),
        };
        if let Some(bn) = &mut self.norm {
            v.extend(bn.params_mut());
        }
        v
    }
}

/// The deraining encoder-decoder.
#[derive(Debug, Clone)]
pub struct DerainNet<T> {
    cfg: ArchConfig,
    encoder: Vec<Block<T>>,
    decoder: Vec<Block<T>>,
}

/// Named view of one stored array of the model, used by checkpoints.
pub struct NamedArray<'a, T> {
    pub name: String,
    pub values: &'a mut Vec<T>,
}

impl<T: Scalar> DerainNet<T> {
    /// Build with all parameters zero, batch-norm scales one.
    pub fn zeroed(cfg: ArchConfig) -> Result<Self> {
        let (enc, dec) = build_layer_table(&cfg)?;
        Ok(Self {
            cfg,
            encoder: enc.into_iter().map(Block::new).collect(),
            decoder: dec.into_iter().map(Block::new).collect(),
        })
    }

    /// Convolution weights drawn from `N(0, 0.02)`, batch-norm scales one, biases zero.
    pub fn new(cfg: ArchConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in net.encoder.iter_mut().chain(net.decoder.iter_mut()) {
            let weights = block.weights_mut();
            // first entry is always the kernel; a trailing bias stays zero
            if let Some(w) = weights.into_iter().next() {
                init_normal(w, INIT_STD, &mut rng);
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &ArchConfig {
        &self.cfg
    }

    pub fn layer_table(&self) -> (LayerTable, LayerTable) {
        (
            self.encoder.iter().map(|b| b.spec).collect(),
            self.decoder.iter().map(|b| b.spec).collect(),
        )
    }

    fn check_input(&self, images: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = images.shape();
        let r = self.cfg.resolution;
        if c != self.cfg.in_channels || h != r || w != r {
            return Err(Error::Shape {
                expected: format!("B x {} x {r} x {r}", self.cfg.in_channels),
                actual: format!("B x {c} x {h} x {w}"),
            });
        }
        Ok(())
    }

    /// Encoder pass. `train` selects batch statistics and caches activations.
    pub fn encode(&mut self, images: &Tensor<T>, train: bool) -> Result<(Tensor<T>, SkipBundle<T>)> {
        self.check_input(images)?;
        let mut x = images.clone();
        let mut features = Vec::with_capacity(self.cfg.stages());
        let last = self.encoder.len() - 1;
        for (i, block) in self.encoder.iter_mut().enumerate() {
            x = block.forward(&x, train);
            if i < last {
                features.push(x.clone());
            }
        }
        Ok((x, SkipBundle { features }))
    }

    /// Decoder pass producing tanh outputs in `[-1, 1]`.
    pub fn decode(&mut self, latent: &Tensor<T>, skips: &SkipBundle<T>, train: bool) -> Result<Tensor<T>> {
        let [_, c, h, w] = latent.shape();
        if c != self.cfg.latent_channels || h != 1 || w != 1 {
            return Err(Error::Shape {
                expected: format!("B x {} x 1 x 1", self.cfg.latent_channels),
                actual: format!("B x {c} x {h} x {w}"),
            });
        }
        let stages = self.cfg.stages();
        if skips.features.len() != stages {
            return Err(Error::Shape {
                expected: format!("{stages} skip features"),
                actual: format!("{} skip features", skips.features.len()),
            });
        }
        let mut x = latent.clone();
        let mut stage = stages;
        for block in &mut self.decoder {
            if block.spec.kind == LayerKind::SkipFuse {
                stage -= 1;
                let skip = &skips.features[stage];
                if skip.shape() != x.shape() {
                    return Err(Error::Shape {
                        expected: format!("skip {:?}", x.shape()),
                        actual: format!("skip {:?}", skip.shape()),
                    });
                }
                x = Tensor::concat_channels(&x, skip);
            }
            x = block.forward(&x, train);
        }
        Ok(x)
    }

    /// Full pass returning raw tanh output in `[-1, 1]`.
    pub fn forward(&mut self, images: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let (latent, skips) = self.encode(images, train)?;
        self.decode(&latent, &skips, train)
    }

    /// Backpropagate `grad` (w.r.t. the tanh output of the last training
    /// `forward`) into parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let stages = self.cfg.stages();
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; stages];
        let mut g = grad.clone();
        let mut stage = 0;
        for block in self.decoder.iter_mut().rev() {
            g = block.backward(&g);
            if block.spec.kind == LayerKind::SkipFuse {
                let half = block.spec.in_channels / 2;
                let (up, skip) = g.split_channels(half);
                skip_grads[stage] = Some(skip);
                stage += 1;
                g = up;
            }
        }
        // g is now the gradient w.r.t. the latent code
        let last = self.encoder.len() - 1;
        for (i, block) in self.encoder.iter_mut().enumerate().rev() {
            if i < last {
                if let Some(sg) = skip_grads[i].take() {
                    g.add_assign(&sg);
                }
            }
            g = block.backward(&g);
        }
        g
    }

    /// Rainy images in `[0, 1]` to derained images in `[0, 1]` (evaluation mode).
    pub fn derain(&mut self, rainy: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.forward(rainy, false)?;
        let half = T::of(0.5);
        Ok(out.map(|v| (v + T::one()) * half))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|b| b.params_mut())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    /// Every stored array (parameters and running statistics) with a stable name.
    pub fn named_arrays(&mut self) -> Vec<NamedArray<'_, T>> {
        let mut out = Vec::new();
        let blocks = self
            .encoder
            .iter_mut()
            .enumerate()
            .map(|(i, b)| (format!("encoder.{i}"), b))
            .chain(
                self.decoder
                    .iter_mut()
                    .enumerate()
                    .map(|(i, b)| (format!("decoder.{i}"), b)),
            );
        for (prefix, block) in blocks {
            let (w, b) = match &mut block.op {
                ConvOp::Conv(c) => (&mut c.weight, c.bias.as_mut()),
                ConvOp::Transpose(c) => (&mut c.weight, c.bias.as_mut()),
            };
            out.push(NamedArray {
                name: format!("{prefix}.weight"),
                values: &mut w.value,
            });
            if let Some(b) = b {
                out.push(NamedArray {
                    name: format!("{prefix}.bias"),
                    values: &mut b.value,
                });
            }
            if let Some(bn) = &mut block.norm {
                out.push(NamedArray {
                    name: format!("{prefix}.norm.gamma"),
                    values: &mut bn.gamma.value,
                });
                out.push(NamedArray {
                    name: format!("{prefix}.norm.beta"),
                    values: &mut bn.beta.value,
                });
                out.push(NamedArray {
                    name: format!("{prefix}.norm.running_mean"),
                    values: &mut bn.running_mean,
                });
                out.push(NamedArray {
                    name: format!("{prefix}.norm.running_var"),
                    values: &mut bn.running_var,
                });
            }
        }
        out
    }

    /// Convert the stored arrays to another scalar type.
    pub fn cast<U: Scalar>(&mut self) -> DerainNet<U> {
        let mut other = DerainNet::<U>::zeroed(self.cfg).expect("config already validated");
        for (src, dst) in self.named_arrays().into_iter().zip(other.named_arrays()) {
            *dst.values = src.values.iter().map(|v| U::of(v.as_f64())).collect();
        }
        other
    }

    /// Zero the output layer's kernel and bias.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.decoder.last_mut() {
            for p in last.weights_mut() {
                p.value.iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }
}

/// Mean squared error between display-space predictions `(y + 1) / 2` and
/// targets in `[0, 1]`, averaged over batch, channels and pixels.
///
/// Returns the loss and its gradient w.r.t. the raw tanh output `y`.
pub fn display_mse_loss<T: Scalar>(raw: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>) {
    assert_eq!(raw.shape(), target.shape(), "loss: shape mismatch");
    let n = raw.data().len();
    let half = T::of(0.5);
    let scale = T::of(1.0 / n as f64);
    let mut sum = 0.0f64;
    let grad = raw
        .data()
        .iter()
        .zip(target.data())
        .map(|(&y, &t)| {
            let d = (y + T::one()) * half - t;
            sum += (d * d).as_f64();
            // d/dy of d^2 / n with d = (y + 1) / 2 - t
            d * scale
        })
        .collect();
    (sum / n as f64, Tensor::from_vec(raw.shape(), grad))
}
