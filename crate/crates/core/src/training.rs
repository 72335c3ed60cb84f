//! Training loop, MSE evaluation and derain checkpoints.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::batching::{plan_epoch, EpochPlan, SampleRef, Scheme, SchemeConfig};
use crate::checkpoint::Container;
pub use crate::dataset::Split;
use crate::dataset::LoadedMap;
use crate::error::{Error, IoContext, Result};
use crate::frame::Frame;
use crate::model::{display_mse_loss, ArchConfig, DerainNet};
use crate::nn::{Adam, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub arch: ArchConfig,
    /// Save an intermediate checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Overlapping sequence pairs for STRB (ablation only).
    pub sliding_pairs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 10,
            learning_rate: 0.0002,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            scheme: Scheme::Strb,
            seed: 0,
            arch: ArchConfig::default(),
            checkpoint_every: 0,
            sliding_pairs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("Adam beta {b} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Plan seed of a 1-based epoch.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.seed.wrapping_add(epoch as u64)
    }

    pub fn scheme_config(&self, epoch: usize) -> SchemeConfig {
        SchemeConfig {
            batch_size: self.batch_size,
            seed: self.epoch_seed(epoch),
            sliding_pairs: self.sliding_pairs,
        }
    }

    /// Hash of every field except the scheme.
    pub fn hash_without_scheme(&self) -> u64 {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("struct").remove("scheme");
        let mut h = std::collections::hash_map::DefaultHasher::new();
        v.to_string().hash(&mut h);
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub split: Split,
    pub mse: f64,
}

pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("epoch,split,mse\n");
    for r in records {
        let _ = writeln!(out, "{},{},{:.9e}", r.epoch, r.split.as_str(), r.mse);
    }
    out
}

/// Anything mapping rainy `[0, 1]` batches to derained `[0, 1]` batches.
pub trait Derainer {
    fn derain_batch(&mut self, rainy: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Derainer for DerainNet<f32> {
    fn derain_batch(&mut self, rainy: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.derain(rainy)
    }
}

/// A trained model plus the bookkeeping needed to resume or replay it.
#[derive(Debug, Clone)]
pub struct DerainCheckpoint {
    pub model: DerainNet<f32>,
    pub step: u64,
    pub epochs_completed: usize,
    pub plan_seed: u64,
    pub scheme: Scheme,
}

#[derive(Serialize, Deserialize)]
struct DerainMeta {
    arch: ArchConfig,
    step: u64,
    epochs_completed: usize,
    plan_seed: u64,
    scheme: Scheme,
}

pub const DERAIN_KIND: &str = "derain";

impl DerainCheckpoint {
    pub fn save(&mut self, path: &Path) -> Result<()> {
        let meta = DerainMeta {
            arch: *self.model.config(),
            step: self.step,
            epochs_completed: self.epochs_completed,
            plan_seed: self.plan_seed,
            scheme: self.scheme,
        };
        let arrays = self
            .model
            .named_arrays()
            .into_iter()
            .map(|a| (a.name, a.values.clone()))
            .collect();
        Container {
            kind: DERAIN_KIND.into(),
            meta: serde_json::to_value(meta)?,
            arrays,
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path)?;
        c.expect_kind(DERAIN_KIND)?;
        let meta: DerainMeta = serde_json::from_value(c.meta.clone())?;
        let mut model = DerainNet::<f32>::zeroed(meta.arch)?;
        c.restore(model.named_arrays().into_iter().map(|a| (a.name, a.values)))?;
        Ok(Self {
            model,
            step: meta.step,
            epochs_completed: meta.epochs_completed,
            plan_seed: meta.plan_seed,
            scheme: meta.scheme,
        })
    }
}

struct SampleIndex<'a> {
    maps: HashMap<&'a str, &'a LoadedMap>,
}

impl<'a> SampleIndex<'a> {
    fn new(sets: &'a [LoadedMap]) -> Self {
        Self {
            maps: sets.iter().map(|m| (m.map_name.as_str(), m)).collect(),
        }
    }

    fn lookup(&self, r: &SampleRef) -> Result<(&'a Frame, &'a Frame)> {
        let map = self
            .maps
            .get(r.map_name.as_str())
            .ok_or_else(|| Error::Integrity(format!("unknown map {}", r.map_name)))?;
        let pos = map
            .position(r.frame_index)
            .ok_or_else(|| Error::Integrity(format!("{} has no frame {}", r.map_name, r.frame_index)))?;
        Ok((&map.rainy[pos], &map.clear[pos]))
    }

    fn batch(&self, refs: &[SampleRef], resolution: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut rainy = Vec::with_capacity(refs.len());
        let mut clear = Vec::with_capacity(refs.len());
        for r in refs {
            let (x, y) = self.lookup(r)?;
            check_frame_size(x, resolution)?;
            rainy.push(x.planar());
            clear.push(y.planar());
        }
        let chw = [3, resolution, resolution];
        Ok((Tensor::stack(&rainy, chw), Tensor::stack(&clear, chw)))
    }
}

fn check_frame_size(f: &Frame, resolution: usize) -> Result<()> {
    if f.height() != resolution || f.width() != resolution {
        return Err(Error::Shape {
            expected: format!("{resolution}x{resolution} frame"),
            actual: format!("{}x{} frame", f.height(), f.width()),
        });
    }
    Ok(())
}

/// Where and how often training writes artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs<'a> {
    /// Directory for checkpoints, `loss.csv` and `plans/`.
    pub dir: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub checkpoint: DerainCheckpoint,
    pub history: Vec<LossRecord>,
    pub plans: Vec<EpochPlan>,
}

/// Held-out maps scored after every epoch.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalSets<'a> {
    pub validation: &'a [LoadedMap],
    pub test: &'a [LoadedMap],
}

/// Train a fresh model on `train_sets`, scoring the held-out maps after every epoch.
pub fn train(
    cfg: &TrainConfig,
    train_sets: &[LoadedMap],
    eval: EvalSets<'_>,
    outputs: &TrainOutputs<'_>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train_sets.iter().all(LoadedMap::is_empty) {
        return Err(Error::Config("training set is empty".into()));
    }
    if eval.validation.iter().chain(eval.test).any(LoadedMap::is_empty) {
        return Err(Error::Config("held-out map without frames".into()));
    }
    let res = cfg.arch.resolution;
    let datasets: Vec<_> = train_sets.iter().map(LoadedMap::as_dataset).collect();
    let index = SampleIndex::new(train_sets);
    let mut model = DerainNet::<f32>::new(cfg.arch, cfg.seed)?;
    let mut opt = Adam::<f32>::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    let mut history = Vec::with_capacity(2 * cfg.epochs);
    let mut plans = Vec::with_capacity(cfg.epochs);
    if let Some(dir) = outputs.dir {
        std::fs::create_dir_all(dir.join("plans")).at(dir)?;
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(cfg)?).at(path)?;
    }

    for epoch in 1..=cfg.epochs {
        let plan = plan_epoch(cfg.scheme, &datasets, &cfg.scheme_config(epoch))?;
        if let Some(dir) = outputs.dir {
            let path = dir.join("plans").join(format!("epoch_{epoch:03}.csv"));
            std::fs::write(&path, plan.to_text()).at(path)?;
        }
        let (mut loss_sum, mut samples) = (0.0f64, 0usize);
        for (b, refs) in plan.batches.iter().enumerate() {
            let (rainy, clear) = index.batch(refs, res)?;
            let out = model.forward(&rainy, true)?;
            let (loss, grad) = display_mse_loss(&out, &clear);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            model.zero_grad();
            model.backward(&grad);
            opt.update(&mut model.params_mut());
            loss_sum += loss * refs.len() as f64;
            samples += refs.len();
        }
        let train_mse = loss_sum / samples as f64;
        history.push(LossRecord {
            epoch,
            split: Split::Train,
            mse: train_mse,
        });
        let mut summary = format!("train {train_mse:.6}");
        for (split, sets) in [(Split::Validation, eval.validation), (Split::Test, eval.test)] {
            if sets.is_empty() {
                continue;
            }
            let mse = evaluate_mse_pooled(&mut model, sets, cfg.batch_size)?;
            history.push(LossRecord { epoch, split, mse });
            let _ = write!(summary, ", {} {mse:.6}", split.as_str());
        }
        log::info!("{} epoch {epoch}/{}: {summary}", cfg.scheme, cfg.epochs);
        plans.push(plan);

        if let Some(dir) = outputs.dir {
            let path = dir.join("loss.csv");
            std::fs::write(&path, loss_csv(&history)).at(path)?;
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch < cfg.epochs {
                let mut ck = DerainCheckpoint {
                    model: model.clone(),
                    step: opt.step,
                    epochs_completed: epoch,
                    plan_seed: cfg.seed,
                    scheme: cfg.scheme,
                };
                ck.save(&dir.join(format!("checkpoint_epoch_{epoch:03}.ckpt")))?;
            }
        }
    }

    let mut checkpoint = DerainCheckpoint {
        model,
        step: opt.step,
        epochs_completed: cfg.epochs,
        plan_seed: cfg.seed,
        scheme: cfg.scheme,
    };
    if let Some(dir) = outputs.dir {
        checkpoint.save(&dir.join("final.ckpt"))?;
    }
    Ok(TrainResult {
        checkpoint,
        history,
        plans,
    })
}

/// Mean per-pixel squared error of `model(rainy)` against `clear`, over all
/// samples, channels and pixels.
pub fn evaluate_mse(model: &mut impl Derainer, dataset: &LoadedMap, batch_size: usize) -> Result<f64> {
    evaluate_mse_pooled(model, std::slice::from_ref(dataset), batch_size)
}

/// [`evaluate_mse`] over the union of several maps.
pub fn evaluate_mse_pooled(model: &mut impl Derainer, datasets: &[LoadedMap], batch_size: usize) -> Result<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for d in datasets {
        let (s, n) = squared_error_sum(model, d, batch_size)?;
        total += s;
        count += n;
    }
    if count == 0 {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    Ok(total / count as f64)
}

fn squared_error_sum(model: &mut impl Derainer, dataset: &LoadedMap, batch_size: usize) -> Result<(f64, usize)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: nothing to evaluate", dataset.map_name)));
    }
    let batch_size = batch_size.max(1);
    let f0 = &dataset.clear[0];
    let (h, w) = (f0.height(), f0.width());
    let mut total = 0.0f64;
    let mut count = 0usize;
    for start in (0..dataset.len()).step_by(batch_size) {
        let end = (start + batch_size).min(dataset.len());
        let rainy: Vec<&[f32]> = dataset.rainy[start..end].iter().map(Frame::planar).collect();
        let out = model.derain_batch(&Tensor::stack(&rainy, [3, h, w]))?;
        if out.shape() != [end - start, 3, h, w] {
            return Err(Error::Shape {
                expected: format!("{:?}", [end - start, 3, h, w]),
                actual: format!("{:?}", out.shape()),
            });
        }
        for (i, clear) in dataset.clear[start..end].iter().enumerate() {
            let pred = out.sample(i);
            // per-sample partial sums keep the total independent of batch size
            let s: f64 = pred
                .iter()
                .zip(clear.planar())
                .map(|(&p, &t)| {
                    let d = p as f64 - t as f64;
                    d * d
                })
                .sum();
            total += s;
            count += pred.len();
        }
    }
    Ok((total, count))
}

/// MSE of predicting 0.5 everywhere.
pub fn constant_baseline_mse(datasets: &[&LoadedMap]) -> Result<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for d in datasets {
        for f in &d.clear {
            total += f.planar().iter().map(|&v| (v as f64 - 0.5).powi(2)).sum::<f64>();
            count += f.planar().len();
        }
    }
    if count == 0 {
        return Err(Error::EmptyDataset("baseline over zero frames".into()));
    }
    Ok(total / count as f64)
}

fn hconcat(panels: &[&Frame]) -> Frame {
    let h = panels.iter().map(|f| f.height()).max().unwrap_or(0);
    let w: usize = panels.iter().map(|f| f.width()).sum();
    let mut out = Frame::filled(h, w, [0.0; 3]);
    let mut x0 = 0;
    for p in panels {
        for y in 0..p.height() {
            for x in 0..p.width() {
                out.set(y, x0 + x, p.get(y, x));
            }
        }
        x0 += p.width();
    }
    out
}

fn vconcat(rows: &[Frame]) -> Frame {
    let w = rows.iter().map(Frame::width).max().unwrap_or(0);
    let h: usize = rows.iter().map(Frame::height).sum();
    let mut out = Frame::filled(h, w, [0.0; 3]);
    let mut y0 = 0;
    for r in rows {
        for y in 0..r.height() {
            for x in 0..r.width() {
                out.set(y0 + y, x, r.get(y, x));
            }
        }
        y0 += r.height();
    }
    out
}

/// Options for [`dump_comparisons`].
#[derive(Debug, Clone, Default)]
pub struct ComparisonOptions<'a> {
    /// Directory of externally derained frames named like the dataset frames.
    pub baseline_dir: Option<&'a Path>,
    /// Write one file stacking the requested frames as rows.
    pub strip: bool,
}

/// Write `rainy | clear | derained [| baseline]` panels for the requested
/// frames and return the files written.
pub fn dump_comparisons(
    model: &mut impl Derainer,
    dataset: &LoadedMap,
    out_dir: &Path,
    frame_indices: &[usize],
    opts: &ComparisonOptions<'_>,
) -> Result<Vec<std::path::PathBuf>> {
    let mut rows = Vec::with_capacity(frame_indices.len());
    for &idx in frame_indices {
        let pos = dataset
            .position(idx)
            .ok_or_else(|| Error::Index { index: idx, len: dataset.len() })?;
        let rainy = &dataset.rainy[pos];
        let (h, w) = (rainy.height(), rainy.width());
        let out = model.derain_batch(&Tensor::stack(&[rainy.planar()], [3, h, w]))?;
        let derained = Frame::from_planar(h, w, out.into_vec());
        let mut panels = vec![rainy, &dataset.clear[pos], &derained];
        let baseline = match opts.baseline_dir {
            Some(dir) => {
                let path = dir.join(crate::dataset::frame_file_name(idx));
                match Frame::load(&path) {
                    Ok(f) => Some(crate::dataset::center_crop_resize(&f, h, w)),
                    Err(e) => {
                        log::warn!("baseline frame {}: {e}; panel omitted", path.display());
                        None
                    }
                }
            }
            None => None,
        };
        if let Some(b) = &baseline {
            panels.push(b);
        }
        rows.push((idx, hconcat(&panels)));
    }
    std::fs::create_dir_all(out_dir).at(out_dir)?;
    let mut written = Vec::new();
    if opts.strip {
        let first = frame_indices.first().copied().unwrap_or(0);
        let path = out_dir.join(format!("{}_strip_{first:06}.png", dataset.map_name));
        let frames: Vec<Frame> = rows.into_iter().map(|(_, f)| f).collect();
        vconcat(&frames).save_png(&path)?;
        written.push(path);
    } else {
        for (idx, f) in rows {
            let path = out_dir.join(format!("{}_{idx:06}.png", dataset.map_name));
            f.save_png(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}
