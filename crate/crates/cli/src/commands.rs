//! Command implementations. Each takes a fully resolved, serializable run
//! description so the same value can be replayed from a manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use seqderain::dataset::{load_map_dataset, preprocess, LoadedMap, Split};
use seqderain::frame::Frame;
use seqderain::nn::Tensor;
use seqderain::steering::{
    build_report, parse_frame_range, steering_training_set, train_pilotnet, PilotNet, PilotTrainConfig, ReportInputs,
};
use seqderain::synth::{RainLevel, SynthConfig};
use seqderain::training::{
    dump_comparisons, evaluate_mse, evaluate_mse_pooled, train, ComparisonOptions, DerainCheckpoint,
    EvalSets, TrainConfig, TrainOutputs,
};

use crate::manifest::RunManifest;

pub const DATASET_FILE: &str = "dataset.toml";

/// Split membership read back from a dataset directory.
#[derive(Debug, Clone, Deserialize)]
pub struct DatasetIndex {
    #[serde(default)]
    pub resolution: Option<usize>,
    pub maps: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub rain: Option<RainLevel>,
    #[serde(default)]
    pub variant_of: Option<String>,
}

impl DatasetIndex {
    pub fn read(data: &Path) -> Result<Self> {
        let path = data.join(DATASET_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn names_in(&self, split: Split) -> Vec<&str> {
        self.maps
            .iter()
            .filter(|m| m.split == Some(split))
            .map(|m| m.name.as_str())
            .collect()
    }
}

pub fn load_map(data: &Path, name: &str, resolution: usize) -> Result<LoadedMap> {
    let (ds, warnings) = load_map_dataset(data, name)?;
    for w in warnings {
        log::warn!("{name}: {w:?}");
    }
    Ok(ds.load_frames(resolution)?)
}

pub fn load_split(data: &Path, index: &DatasetIndex, split: Split, resolution: usize) -> Result<Vec<LoadedMap>> {
    index
        .names_in(split)
        .into_iter()
        .map(|n| load_map(data, n, resolution))
        .collect()
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_toml)
}

fn is_empty_dir(dir: &Path) -> Result<bool> {
    match std::fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(e).with_context(|| format!("reading {}", dir.display())),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthRun {
    pub config: SynthConfig,
    pub out: PathBuf,
    pub force: bool,
}

impl SynthRun {
    pub fn run(&self) -> Result<()> {
        self.config.validate()?;
        if !self.force && !is_empty_dir(&self.out)? {
            bail!("{} is not empty; pass --force to write into it", self.out.display());
        }
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        for m in &self.config.maps {
            log::info!("synthesizing {} ({} frames)", m.name, self.config.n_frames);
            self.config.synthesize(m)?.write(&self.out)?;
        }
        let path = self.out.join(DATASET_FILE);
        std::fs::write(&path, toml::to_string(&self.config)?).with_context(|| format!("writing {}", path.display()))?;
        let mut manifest = RunManifest::new("synth", self)?.output("dataset", &self.out);
        for m in &self.config.maps {
            manifest = manifest.seed(&format!("{}.scene", m.name), m.scene_seed);
            manifest = manifest.seed(&format!("{}.rain", m.name), m.rain_seed);
        }
        manifest.write(&self.out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
}

impl TrainRun {
    pub fn run(&self) -> Result<()> {
        self.train.validate()?;
        let index = DatasetIndex::read(&self.data)?;
        let res = self.train.arch.resolution;
        let train_sets = load_split(&self.data, &index, Split::Train, res)?;
        ensure!(!train_sets.is_empty(), "{} has no training maps", self.data.display());
        let val = load_split(&self.data, &index, Split::Validation, res)?;
        let test = load_split(&self.data, &index, Split::Test, res)?;
        let result = train(
            &self.train,
            &train_sets,
            EvalSets {
                validation: &val,
                test: &test,
            },
            &TrainOutputs { dir: Some(&self.out) },
        )?;
        let last = self.train.epochs;
        println!("split,mse");
        for r in result.history.iter().filter(|r| r.epoch == last) {
            println!("{},{:.6e}", r.split.as_str(), r.mse);
        }
        RunManifest::new("train", self)?
            .input("data", &self.data)
            .output("checkpoint", &self.out.join("final.ckpt"))
            .output("loss", &self.out.join("loss.csv"))
            .output("plans", &self.out.join("plans"))
            .seed("train", self.train.seed)
            .write(&self.out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerainRun {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub out: PathBuf,
    /// Centre-crop and resize inputs to the checkpoint resolution.
    pub resize: bool,
}

fn png_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    ensure!(!files.is_empty(), "no PNG files in {}", input.display());
    Ok(files)
}

impl DerainRun {
    pub fn run(&self) -> Result<()> {
        let mut ck = DerainCheckpoint::load(&self.checkpoint)?;
        let res = ck.model.config().resolution;
        let files = png_inputs(&self.input)?;
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        for chunk in files.chunks(10) {
            let mut frames = Vec::with_capacity(chunk.len());
            for path in chunk {
                let f = Frame::load(path)?;
                if (f.height(), f.width()) != (res, res) {
                    if !self.resize {
                        bail!(
                            "{} is {}x{} but checkpoint {} expects {res}x{res} (use --resize)",
                            path.display(),
                            f.height(),
                            f.width(),
                            self.checkpoint.display()
                        );
                    }
                    frames.push(preprocess(&f, res));
                } else {
                    frames.push(f);
                }
            }
            let refs: Vec<&[f32]> = frames.iter().map(Frame::planar).collect();
            let out = ck.model.derain(&Tensor::stack(&refs, [3, res, res]))?;
            for (i, path) in chunk.iter().enumerate() {
                let name = path.file_name().expect("file path");
                Frame::from_planar(res, res, out.sample(i).to_vec()).save_png(&self.out.join(name))?;
            }
        }
        log::info!("derained {} images into {}", files.len(), self.out.display());
        RunManifest::new("derain", self)?
            .input("checkpoint", &self.checkpoint)
            .input("images", &self.input)
            .output("images", &self.out)
            .write(&self.out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRun {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub split: Split,
    pub batch_size: usize,
    pub out: Option<PathBuf>,
}

impl EvalRun {
    pub fn run(&self) -> Result<f64> {
        let mut ck = DerainCheckpoint::load(&self.checkpoint)?;
        let index = DatasetIndex::read(&self.data)?;
        let maps = load_split(&self.data, &index, self.split, ck.model.config().resolution)?;
        ensure!(!maps.is_empty(), "{} has no {} maps", self.data.display(), self.split.as_str());
        let mut csv = String::from("map,split,mse\n");
        for m in &maps {
            let mse = evaluate_mse(&mut ck.model, m, self.batch_size)?;
            csv += &format!("{},{},{mse:.9e}\n", m.map_name, self.split.as_str());
        }
        let pooled = evaluate_mse_pooled(&mut ck.model, &maps, self.batch_size)?;
        csv += &format!("all,{},{pooled:.9e}\n", self.split.as_str());
        print!("{csv}");
        if let Some(out) = &self.out {
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            std::fs::write(out.join("eval.csv"), &csv).context("writing eval.csv")?;
            RunManifest::new("eval", self)?
                .input("checkpoint", &self.checkpoint)
                .input("data", &self.data)
                .output("eval", &out.join("eval.csv"))
                .write(out)?;
        }
        Ok(pooled)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotRun {
    pub data: PathBuf,
    pub out: PathBuf,
    /// Frames are loaded at this size before the PilotNet crop and resize.
    pub resolution: usize,
    pub steering_ratio: f64,
    pub pilot: PilotTrainConfig,
}

impl PilotRun {
    pub fn train(&self) -> Result<PathBuf> {
        let index = DatasetIndex::read(&self.data)?;
        let maps = load_split(&self.data, &index, Split::Train, self.resolution)?;
        let (frames, angles) = steering_training_set(&maps, self.steering_ratio)?;
        let mut r = train_pilotnet(&self.pilot, &frames, &angles)?;
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join("pilot.ckpt");
        r.model.save(&path, &r.history)?;
        let mut csv = String::from("epoch,mse_deg2\n");
        for (i, m) in r.history.iter().enumerate() {
            csv += &format!("{},{m:.9e}\n", i + 1);
        }
        std::fs::write(self.out.join("pilot_loss.csv"), csv).context("writing pilot_loss.csv")?;
        Ok(path)
    }

    pub fn run(&self) -> Result<()> {
        let path = self.train()?;
        RunManifest::new("pilot", self)?
            .input("data", &self.data)
            .output("checkpoint", &path)
            .seed("pilot", self.pilot.seed)
            .write(&self.out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SteerConfig {
    pub steering_ratio: f64,
    /// Inclusive frame ranges such as `"40-55"`.
    pub exclude: Vec<String>,
    pub derain_batch_size: usize,
    /// Used when no pilot checkpoint is supplied.
    pub pilot: PilotTrainConfig,
}

impl Default for SteerConfig {
    fn default() -> Self {
        Self {
            steering_ratio: seqderain::dataset::DEFAULT_STEERING_RATIO,
            exclude: Vec::new(),
            derain_batch_size: 10,
            pilot: PilotTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteerRun {
    pub derain_checkpoint: PathBuf,
    pub pilot_checkpoint: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub steer: SteerConfig,
}

fn rain_label(level: Option<RainLevel>) -> &'static str {
    match level {
        Some(RainLevel::Light) => "Light Rain",
        Some(RainLevel::Heavy) | None => "Heavy Rain",
    }
}

impl SteerRun {
    pub fn run(&self) -> Result<()> {
        let exclude = self
            .steer
            .exclude
            .iter()
            .map(|s| parse_frame_range(s))
            .collect::<seqderain::Result<Vec<_>>>()?;
        let mut derain = DerainCheckpoint::load(&self.derain_checkpoint)?;
        let res = derain.model.config().resolution;
        let pilot_path = match &self.pilot_checkpoint {
            Some(p) => p.clone(),
            None => PilotRun {
                data: self.data.clone(),
                out: self.out.clone(),
                resolution: res,
                steering_ratio: self.steer.steering_ratio,
                pilot: self.steer.pilot.clone(),
            }
            .train()?,
        };
        let mut pilot = PilotNet::load(&pilot_path)?;
        let index = DatasetIndex::read(&self.data)?;
        let tests: Vec<&IndexEntry> = index.maps.iter().filter(|m| m.split == Some(Split::Test)).collect();
        ensure!(!tests.is_empty(), "{} has no test map", self.data.display());
        let mut table = String::new();
        for entry in tests {
            let test = load_map(&self.data, &entry.name, res)?;
            let mut extra = Vec::new();
            for v in index.maps.iter().filter(|m| m.variant_of.as_deref() == Some(&entry.name)) {
                let m = load_map(&self.data, &v.name, res)?;
                ensure!(
                    m.frame_indices == test.frame_indices,
                    "{} does not cover the frames of {}",
                    v.name,
                    entry.name
                );
                extra.push((rain_label(v.rain).to_string(), m.rainy));
            }
            let report = build_report(
                &mut pilot,
                &mut derain.model,
                &ReportInputs {
                    test: &test,
                    rainy_label: rain_label(entry.rain),
                    extra,
                    exclude: exclude.clone(),
                    steering_ratio: self.steer.steering_ratio,
                    derain_batch_size: self.steer.derain_batch_size,
                },
            )?;
            report.write(&self.out.join(&entry.name))?;
            table += &report.table_csv();
        }
        print!("{table}");
        let mut m = RunManifest::new("steer", self)?
            .input("derain_checkpoint", &self.derain_checkpoint)
            .input("data", &self.data)
            .output("report", &self.out);
        if self.pilot_checkpoint.is_none() {
            m = m.seed("pilot", self.steer.pilot.seed).output("pilot_checkpoint", &pilot_path);
        } else {
            m = m.input("pilot_checkpoint", &pilot_path);
        }
        m.write(&self.out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRun {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub map: String,
    pub frames: Vec<usize>,
    pub strip: bool,
    pub baseline: Option<PathBuf>,
    pub out: PathBuf,
}

impl CompareRun {
    pub fn run(&self) -> Result<()> {
        let mut ck = DerainCheckpoint::load(&self.checkpoint)?;
        let map = load_map(&self.data, &self.map, ck.model.config().resolution)?;
        let files = dump_comparisons(
            &mut ck.model,
            &map,
            &self.out,
            &self.frames,
            &ComparisonOptions {
                baseline_dir: self.baseline.as_deref(),
                strip: self.strip,
            },
        )?;
        for f in &files {
            println!("{}", f.display());
        }
        RunManifest::new("compare", self)?
            .input("checkpoint", &self.checkpoint)
            .input("data", &self.data)
            .output("panels", &self.out)
            .write(&self.out)
    }
}

/// Re-run the command recorded in a manifest, writing into `out`.
pub fn replay(manifest: &RunManifest, out: &Path, force: bool) -> Result<()> {
    let cfg = manifest.config.clone();
    let out = out.to_path_buf();
    match manifest.command.as_str() {
        "synth" => SynthRun {
            out,
            force,
            ..serde_json::from_value(cfg)?
        }
        .run(),
        "train" => TrainRun {
            out,
            ..serde_json::from_value(cfg)?
        }
        .run(),
        "derain" => DerainRun {
            out,
            ..serde_json::from_value(cfg)?
        }
        .run(),
        "eval" => EvalRun {
            out: Some(out),
            ..serde_json::from_value(cfg)?
        }
        .run()
        .map(|_| ()),
        "pilot" => PilotRun {
            out,
            ..serde_json::from_value(cfg)?
        }
        .run(),
        "steer" => SteerRun {
            out,
            ..serde_json::from_value(cfg)?
        }
        .run(),
        "compare" => CompareRun {
            out,
            ..serde_json::from_value(cfg)?
        }
        .run(),
        other => bail!("manifest names unknown command {other:?}"),
    }
}
