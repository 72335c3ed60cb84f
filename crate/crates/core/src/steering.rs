//! PilotNet steering predictor and the clear/rainy/derained comparison report.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::dataset::{center_crop_resize, drive_to_steering_angle, LoadedMap};
use crate::error::{Error, IoContext, Result};
use crate::frame::Frame;
use crate::metrics::{linear_regression, mean_absolute_error, RegressionResult};
use crate::nn::{conv_out_size, init_normal, Activation, ActivationLayer, Adam, Conv2d, Linear, Param, Tensor};
use crate::plot;
use crate::training::Derainer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotNetConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub conv_strides: Vec<usize>,
    /// Hidden fully-connected widths; a final 1-unit layer follows.
    pub fc_widths: Vec<usize>,
    /// Degrees represented by one unit of network output.
    pub output_scale_deg: f64,
}

impl Default for PilotNetConfig {
    fn default() -> Self {
        Self {
            input_height: 66,
            input_width: 200,
            conv_channels: vec![24, 36, 48, 64, 64],
            conv_kernels: vec![5, 5, 5, 3, 3],
            conv_strides: vec![2, 2, 2, 1, 1],
            fc_widths: vec![100, 50, 10],
            output_scale_deg: 10.0,
        }
    }
}

impl PilotNetConfig {
    /// Spatial size after each convolution, or an error if the input is too small.
    pub fn conv_output_sizes(&self) -> Result<Vec<(usize, usize)>> {
        let n = self.conv_channels.len();
        if n == 0 || self.conv_kernels.len() != n || self.conv_strides.len() != n {
            return Err(Error::Config("conv channel/kernel/stride lists must be non-empty and equal length".into()));
        }
        if !(self.output_scale_deg > 0.0) {
            return Err(Error::Config("output scale must be positive".into()));
        }
        let (mut h, mut w) = (self.input_height, self.input_width);
        let mut sizes = Vec::with_capacity(n);
        for (&k, &s) in self.conv_kernels.iter().zip(&self.conv_strides) {
            if h < k || w < k || s == 0 {
                return Err(Error::Config(format!(
                    "input {}x{} too small for the convolution stack",
                    self.input_height, self.input_width
                )));
            }
            h = conv_out_size(h, k, s, 0);
            w = conv_out_size(w, k, s, 0);
            sizes.push((h, w));
        }
        Ok(sizes)
    }

    pub fn flatten_size(&self) -> Result<usize> {
        let (h, w) = *self.conv_output_sizes()?.last().expect("non-empty");
        Ok(self.conv_channels.last().expect("non-empty") * h * w)
    }
}

/// Convolutional steering regressor. Input frames in `[0, 1]`, output degrees.
#[derive(Debug, Clone)]
pub struct PilotNet {
    cfg: PilotNetConfig,
    convs: Vec<Conv2d<f32>>,
    conv_acts: Vec<ActivationLayer<f32>>,
    fcs: Vec<Linear<f32>>,
    fc_acts: Vec<ActivationLayer<f32>>,
    conv_out_shape: [usize; 4],
}

impl PilotNet {
    pub fn zeroed(cfg: PilotNetConfig) -> Result<Self> {
        let flat = cfg.flatten_size()?;
        let mut convs = Vec::new();
        let mut in_c = 3;
        for i in 0..cfg.conv_channels.len() {
            let out_c = cfg.conv_channels[i];
            convs.push(Conv2d::new(in_c, out_c, cfg.conv_kernels[i], cfg.conv_strides[i], 0, true));
            in_c = out_c;
        }
        let mut fcs = Vec::new();
        let mut fi = flat;
        for &fo in cfg.fc_widths.iter().chain(std::iter::once(&1)) {
            fcs.push(Linear::new(fi, fo));
            fi = fo;
        }
        let conv_acts = (0..convs.len()).map(|_| ActivationLayer::new(Activation::Relu)).collect();
        let fc_acts = (0..fcs.len() - 1).map(|_| ActivationLayer::new(Activation::Relu)).collect();
        Ok(Self {
            cfg,
            convs,
            conv_acts,
            fcs,
            fc_acts,
            conv_out_shape: [0; 4],
        })
    }

    /// He-normal weights, zero biases.
    pub fn new(cfg: PilotNetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &mut net.convs {
            let fan_in = c.in_channels * c.kernel * c.kernel;
            init_normal(&mut c.weight, (2.0 / fan_in as f64).sqrt(), &mut rng);
        }
        let last = net.fcs.len() - 1;
        for (i, l) in net.fcs.iter_mut().enumerate() {
            let gain = if i == last { 1.0 } else { 2.0 };
            init_normal(&mut l.weight, (gain / l.in_features as f64).sqrt(), &mut rng);
        }
        Ok(net)
    }

    pub fn config(&self) -> &PilotNetConfig {
        &self.cfg
    }

    pub fn zero_output_layer(&mut self) {
        let l = self.fcs.last_mut().expect("at least one layer");
        l.weight.value.fill(0.0);
        l.bias.value.fill(0.0);
    }

    fn check_input(&self, x: &Tensor<f32>) -> Result<()> {
        let want = [x.batch(), 3, self.cfg.input_height, self.cfg.input_width];
        if x.shape() != want {
            return Err(Error::Shape {
                expected: format!("{want:?}"),
                actual: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    /// Raw network output, one value per sample (`[n, 1, 1, 1]`).
    pub fn forward(&mut self, images: &Tensor<f32>, train: bool) -> Result<Tensor<f32>> {
        self.check_input(images)?;
        let mut x = images.map(|v| 2.0 * v - 1.0);
        for (c, a) in self.convs.iter_mut().zip(&mut self.conv_acts) {
            x = a.forward(&c.forward(&x, train), train);
        }
        self.conv_out_shape = x.shape();
        let n = x.batch();
        let mut x = x.reshape([n, self.conv_out_shape[1] * self.conv_out_shape[2] * self.conv_out_shape[3], 1, 1]);
        let last = self.fcs.len() - 1;
        for i in 0..self.fcs.len() {
            x = self.fcs[i].forward(&x, train);
            if i < last {
                x = self.fc_acts[i].forward(&x, train);
            }
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad: &Tensor<f32>) {
        let mut g = grad.clone();
        for i in (0..self.fcs.len()).rev() {
            if i < self.fc_acts.len() {
                g = self.fc_acts[i].backward(&g);
            }
            g = self.fcs[i].backward(&g);
        }
        let mut g = g.reshape(self.conv_out_shape);
        for (c, a) in self.convs.iter_mut().zip(&mut self.conv_acts).rev() {
            g = c.backward(&a.backward(&g));
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.extend(c.params_mut());
        }
        for l in &mut self.fcs {
            out.extend(l.params_mut());
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Steering angles in degrees for frames of any size; each is
    /// centre-cropped and resized to the network input first.
    pub fn predict(&mut self, frames: &[Frame]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(32) {
            let x = self.input_batch(chunk.iter());
            let y = self.forward(&x, false)?;
            out.extend(y.data().iter().map(|&v| v as f64 * self.cfg.output_scale_deg));
        }
        Ok(out)
    }

    fn input_batch<'a>(&self, frames: impl Iterator<Item = &'a Frame>) -> Tensor<f32> {
        let (h, w) = (self.cfg.input_height, self.cfg.input_width);
        let resized: Vec<Frame> = frames.map(|f| center_crop_resize(f, h, w)).collect();
        let refs: Vec<&[f32]> = resized.iter().map(Frame::planar).collect();
        Tensor::stack(&refs, [3, h, w])
    }

    fn named_arrays(&mut self) -> Vec<(String, &mut Vec<f32>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv.{i}.weight"), &mut c.weight.value));
            if let Some(b) = c.bias.as_mut() {
                out.push((format!("conv.{i}.bias"), &mut b.value));
            }
        }
        for (i, l) in self.fcs.iter_mut().enumerate() {
            out.push((format!("fc.{i}.weight"), &mut l.weight.value));
            out.push((format!("fc.{i}.bias"), &mut l.bias.value));
        }
        out
    }

    pub fn save(&mut self, path: &Path, history: &[f64]) -> Result<()> {
        let meta = serde_json::json!({ "config": self.cfg, "train_mse_deg2": history });
        let arrays = self.named_arrays().into_iter().map(|(n, v)| (n, v.clone())).collect();
        Container {
            kind: PILOT_KIND.into(),
            meta,
            arrays,
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path)?;
        c.expect_kind(PILOT_KIND)?;
        let cfg: PilotNetConfig = serde_json::from_value(c.meta["config"].clone())?;
        let mut net = Self::zeroed(cfg)?;
        c.restore(net.named_arrays())?;
        Ok(net)
    }
}

pub const PILOT_KIND: &str = "pilotnet";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub net: PilotNetConfig,
}

impl Default for PilotTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-4,
            seed: 0,
            net: PilotNetConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PilotTrainResult {
    pub model: PilotNet,
    /// Epoch-mean training MSE in squared degrees.
    pub history: Vec<f64>,
}

/// Fit a fresh PilotNet to `angles` (steering-wheel degrees) by MSE.
pub fn train_pilotnet(cfg: &PilotTrainConfig, frames: &[Frame], angles: &[f64]) -> Result<PilotTrainResult> {
    if frames.is_empty() {
        return Err(Error::Config("steering training set is empty".into()));
    }
    if frames.len() != angles.len() {
        return Err(Error::Shape {
            expected: format!("{} angles", frames.len()),
            actual: format!("{} angles", angles.len()),
        });
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    let mut model = PilotNet::new(cfg.net.clone(), cfg.seed)?;
    let scale = cfg.net.output_scale_deg;
    let mut opt = Adam::<f32>::new(cfg.learning_rate, 0.9, 0.999);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sum = 0.0f64;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = model.input_batch(idx.iter().map(|&i| &frames[i]));
            let y = model.forward(&x, true)?;
            let n = idx.len() as f64;
            let mut loss = 0.0f64;
            let grad: Vec<f32> = y
                .data()
                .iter()
                .zip(idx)
                .map(|(&p, &i)| {
                    let d = p as f64 - angles[i] / scale;
                    loss += d * d;
                    (2.0 * d / n) as f32
                })
                .collect();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            model.zero_grad();
            model.backward(&Tensor::from_vec(y.shape(), grad));
            opt.update(&mut model.params_mut());
            sum += loss * scale * scale;
        }
        let mse = sum / frames.len() as f64;
        log::info!("pilot epoch {epoch}/{}: train mse {mse:.4} deg^2", cfg.epochs);
        history.push(mse);
    }
    Ok(PilotTrainResult { model, history })
}

/// Clear frames and steering-wheel angles of every map, in map order.
pub fn steering_training_set(maps: &[LoadedMap], steering_ratio: f64) -> Result<(Vec<Frame>, Vec<f64>)> {
    let mut frames = Vec::new();
    let mut angles = Vec::new();
    for m in maps {
        for (pos, &idx) in m.frame_indices.iter().enumerate() {
            frames.push(m.clear[pos].clone());
            angles.push(drive_to_steering_angle(steering_angle_of(m, idx)?, steering_ratio)?);
        }
    }
    Ok((frames, angles))
}

fn steering_angle_of(m: &LoadedMap, idx: usize) -> Result<f64> {
    m.steering
        .binary_search_by_key(&idx, |r| r.frame_index)
        .map(|i| m.steering[i].drive_wheel_angle)
        .map_err(|_| Error::Integrity(format!("{}: no steering record for frame {idx}", m.map_name)))
}

/// One evaluated condition of a [`SteeringReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ConditionResult {
    pub name: String,
    pub predictions: Vec<f64>,
    /// Ground truth minus prediction, per frame.
    pub errors: Vec<f64>,
    pub mae: f64,
    /// Fit of this condition's predictions against the clear-condition predictions.
    pub vs_clear: RegressionResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteeringReport {
    pub map_name: String,
    pub frame_indices: Vec<usize>,
    pub truth: Vec<f64>,
    pub conditions: Vec<ConditionResult>,
}

impl SteeringReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// `condition,mae_deg,r_squared_vs_clear`, one row per condition.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("condition,mae_deg,r_squared_vs_clear\n");
        for c in &self.conditions {
            let r2 = c.vs_clear.r_squared.map_or("nan".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{},{:.6},{r2}", c.name, c.mae);
        }
        out
    }

    /// Per-frame truth, predictions and errors of every condition.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("frame,truth_deg");
        for c in &self.conditions {
            let _ = write!(out, ",pred_{0},error_{0}", slug(&c.name));
        }
        out.push('\n');
        for (i, f) in self.frame_indices.iter().enumerate() {
            let _ = write!(out, "{f},{:.6}", self.truth[i]);
            for c in &self.conditions {
                let _ = write!(out, ",{:.6},{:.6}", c.predictions[i], c.errors[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn regression_csv(&self) -> String {
        let mut out = String::from("condition,slope,intercept,r_squared,degenerate\n");
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        for c in &self.conditions {
            let r = &c.vs_clear;
            let deg = r
                .degenerate
                .map_or(String::new(), |d| serde_json::to_value(d).unwrap().as_str().unwrap_or("").to_string());
            let _ = writeln!(out, "{},{},{},{},{deg}", c.name, f(r.slope), f(r.intercept), f(r.r_squared));
        }
        out
    }

    /// Write CSV tables and SVG plots into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).at(p)
        };
        put("mae_table.csv", self.table_csv())?;
        put("error_series.csv", self.series_csv())?;
        put("regression.csv", self.regression_csv())?;
        put("report.json", serde_json::to_string_pretty(self)? + "\n")?;
        let series: Vec<(&str, Vec<(f64, f64)>)> = self
            .conditions
            .iter()
            .map(|c| {
                let pts = self.frame_indices.iter().zip(&c.errors).map(|(&f, &e)| (f as f64, e)).collect();
                (c.name.as_str(), pts)
            })
            .collect();
        put(
            "error_series.svg",
            plot::line_plot(
                &format!("Steering error on {}", self.map_name),
                "frame",
                "truth - prediction (deg)",
                &series,
            ),
        )?;
        let clear = &self.conditions[0];
        for c in &self.conditions[1..] {
            let pts: Vec<(f64, f64)> = clear.predictions.iter().copied().zip(c.predictions.iter().copied()).collect();
            let fit = c.vs_clear.slope.zip(c.vs_clear.intercept);
            let note = c.vs_clear.r_squared.map_or("R² undefined".into(), |r| format!("R² = {r:.3}"));
            let name = slug(&c.name);
            let mut csv = format!("frame,{},{}\n", slug(&clear.name), name);
            for (f, (x, y)) in self.frame_indices.iter().zip(&pts) {
                let _ = writeln!(csv, "{f},{x:.6},{y:.6}");
            }
            put(&format!("scatter_{name}.csv"), csv)?;
            put(
                &format!("scatter_{name}.svg"),
                plot::scatter_plot(
                    &format!("{} vs {}", clear.name, c.name),
                    &format!("{} prediction (deg)", clear.name),
                    &format!("{} prediction (deg)", c.name),
                    &pts,
                    fit,
                    &note,
                ),
            )?;
        }
        Ok(())
    }
}

fn slug(name: &str) -> String {
    name.to_lowercase().replace(|c: char| !c.is_ascii_alphanumeric(), "_")
}

/// Inputs to [`build_report`] besides the two models.
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    /// Test map: clear frames, rainy frames and steering records.
    pub test: &'a LoadedMap,
    /// Label for the test map's rainy frames.
    pub rainy_label: &'a str,
    /// More conditions, each with one frame per test frame in the same order.
    pub extra: Vec<(String, Vec<Frame>)>,
    /// Inclusive frame-index ranges left out of every series.
    pub exclude: Vec<RangeInclusive<usize>>,
    pub steering_ratio: f64,
    pub derain_batch_size: usize,
}

pub const CLEAR: &str = "Clear";
pub const DERAINED: &str = "Derained";

/// Evaluate clear, rainy, extra and derained inputs on the same included frames.
pub fn build_report(pilot: &mut PilotNet, derainer: &mut impl Derainer, inputs: &ReportInputs<'_>) -> Result<SteeringReport> {
    let test = inputs.test;
    let n = test.len();
    if test.steering.is_empty() {
        return Err(Error::Integrity(format!("{}: no steering data", test.map_name)));
    }
    for (name, frames) in &inputs.extra {
        if frames.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} frames for condition {name}"),
                actual: format!("{} frames", frames.len()),
            });
        }
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&p| !inputs.exclude.iter().any(|r| r.contains(&test.frame_indices[p])))
        .collect();
    if keep.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "{}: {} frames left after exclusions",
            test.map_name,
            keep.len()
        )));
    }
    let frame_indices: Vec<usize> = keep.iter().map(|&p| test.frame_indices[p]).collect();
    let truth = frame_indices
        .iter()
        .map(|&i| drive_to_steering_angle(steering_angle_of(test, i)?, inputs.steering_ratio))
        .collect::<Result<Vec<f64>>>()?;

    let pick = |frames: &[Frame]| -> Vec<Frame> { keep.iter().map(|&p| frames[p].clone()).collect() };
    let rainy = pick(&test.rainy);
    let mut derained = Vec::with_capacity(rainy.len());
    for chunk in rainy.chunks(inputs.derain_batch_size.max(1)) {
        let (h, w) = (chunk[0].height(), chunk[0].width());
        let refs: Vec<&[f32]> = chunk.iter().map(Frame::planar).collect();
        let out = derainer.derain_batch(&Tensor::stack(&refs, [3, h, w]))?;
        let (oh, ow) = (out.height(), out.width());
        for i in 0..chunk.len() {
            derained.push(Frame::from_planar(oh, ow, out.sample(i).to_vec()));
        }
    }
    let mut streams: Vec<(String, Vec<Frame>)> = vec![
        (CLEAR.to_string(), pick(&test.clear)),
        (inputs.rainy_label.to_string(), rainy),
    ];
    for (name, frames) in &inputs.extra {
        streams.push((name.clone(), pick(frames)));
    }
    streams.push((DERAINED.to_string(), derained));

    let mut conditions: Vec<ConditionResult> = Vec::with_capacity(streams.len());
    for (name, frames) in streams {
        let predictions = pilot.predict(&frames)?;
        let errors = truth.iter().zip(&predictions).map(|(t, p)| t - p).collect();
        let mae = mean_absolute_error(&predictions, &truth)?;
        let x = conditions.first().map_or(&predictions, |c| &c.predictions);
        let vs_clear = linear_regression(x, &predictions)?;
        conditions.push(ConditionResult {
            name,
            predictions,
            errors,
            mae,
            vs_clear,
        });
    }
    Ok(SteeringReport {
        map_name: test.map_name.clone(),
        frame_indices,
        truth,
        conditions,
    })
}

/// Parse `a-b` or `a` into an inclusive frame range.
pub fn parse_frame_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || Error::Config(format!("bad frame range {s:?}; expected START-END or FRAME"));
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s.trim(), s.trim()),
    };
    let a: usize = a.parse().map_err(|_| bad())?;
    let b: usize = b.parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok(a..=b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_flattens_to_1152() {
        let c = PilotNetConfig::default();
        assert_eq!(
            c.conv_output_sizes().unwrap(),
            vec![(31, 98), (14, 47), (5, 22), (3, 20), (1, 18)]
        );
        assert_eq!(c.flatten_size().unwrap(), 1152);
    }

    #[test]
    fn tiny_input_is_rejected() {
        let c = PilotNetConfig {
            input_height: 20,
            ..PilotNetConfig::default()
        };
        assert!(matches!(c.flatten_size(), Err(Error::Config(_))));
    }

    #[test]
    fn frame_ranges() {
        assert_eq!(parse_frame_range("3-7").unwrap(), 3..=7);
        assert_eq!(parse_frame_range("5").unwrap(), 5..=5);
        assert!(parse_frame_range("7-3").is_err());
        assert!(parse_frame_range("x").is_err());
    }
}
