//! `seqderain`: synthesize data, train and evaluate derainers, and score
//! their effect on a steering predictor.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use seqderain::batching::Scheme;
use seqderain::dataset::Split;
use seqderain::synth::SynthConfig;
use seqderain::training::TrainConfig;

use commands::{
    load_config, replay, CompareRun, DatasetIndex, DerainRun, EvalRun, PilotRun, SteerConfig, SteerRun, SynthRun, TrainRun,
};
use manifest::{RunManifest, DETERMINISTIC_ENV};

#[derive(Parser)]
#[command(name = "seqderain", version, about = "Rain-streak removal trained on sequential frame batches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-map dataset.
    Synth {
        /// TOML dataset description; the built-in seven-town benchmark if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        n_frames: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Train a derainer under one batching scheme.
    Train(TrainArgs),
    /// Derain a PNG file or every PNG in a directory.
    Derain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Centre-crop and resize inputs that do not match the checkpoint resolution.
        #[arg(long)]
        resize: bool,
    },
    /// Mean squared error of a checkpoint on one dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = 10)]
        batch_size: usize,
        /// Directory for eval.csv and the run manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the steering predictor on clear training frames.
    Pilot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML steering configuration (only its `pilot` table and ratio are used).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Load frames at this size; defaults to the dataset's own resolution.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare steering error on clear, rainy and derained test frames.
    Steer {
        #[arg(long)]
        derain_checkpoint: PathBuf,
        /// Trained steering predictor; one is trained on the data if omitted.
        #[arg(long)]
        pilot_checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Frame range to leave out, e.g. `40-55`; repeatable.
        #[arg(long)]
        exclude: Vec<String>,
        #[arg(long)]
        steering_ratio: Option<f64>,
        #[arg(long)]
        pilot_epochs: Option<usize>,
    },
    /// Write rainy | clear | derained panels for chosen frames.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        map: String,
        #[arg(long, value_delimiter = ',', required = true)]
        frames: Vec<usize>,
        /// One image with a row per frame.
        #[arg(long)]
        strip: bool,
        /// Directory of another method's outputs, added as a fourth column.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a command from its manifest into a new output directory.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML training configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    channel_cap: Option<usize>,
    #[arg(long)]
    latent_channels: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Overlapping sequence pairs for STRB.
    #[arg(long)]
    sliding_pairs: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Stsb,
    Strb,
    Rtrb,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Stsb => Scheme::Stsb,
            SchemeArg::Strb => Scheme::Strb,
            SchemeArg::Rtrb => Scheme::Rtrb,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c: TrainConfig = load_config(a.config.as_deref())?;
    set(&mut c.scheme, a.scheme.map(Into::into));
    set(&mut c.epochs, a.epochs);
    set(&mut c.batch_size, a.batch_size);
    set(&mut c.learning_rate, a.lr);
    set(&mut c.adam_beta1, a.beta1);
    set(&mut c.adam_beta2, a.beta2);
    set(&mut c.seed, a.seed);
    set(&mut c.arch.resolution, a.resolution);
    set(&mut c.arch.base_channels, a.base_channels);
    set(&mut c.arch.channel_cap, a.channel_cap);
    set(&mut c.arch.latent_channels, a.latent_channels);
    set(&mut c.checkpoint_every, a.checkpoint_every);
    c.sliding_pairs |= a.sliding_pairs;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            config,
            out,
            force,
            n_frames,
            resolution,
        } => {
            let mut c: SynthConfig = load_config(config.as_deref())?;
            set(&mut c.n_frames, n_frames);
            set(&mut c.resolution, resolution);
            SynthRun { config: c, out, force }.run()
        }
        Command::Train(a) => {
            let train = train_config(&a)?;
            TrainRun {
                data: a.data,
                out: a.out,
                train,
            }
            .run()
        }
        Command::Derain {
            checkpoint,
            input,
            out,
            resize,
        } => DerainRun {
            checkpoint,
            input,
            out,
            resize,
        }
        .run(),
        Command::Eval {
            checkpoint,
            data,
            split,
            batch_size,
            out,
        } => EvalRun {
            checkpoint,
            data,
            split: split.into(),
            batch_size,
            out,
        }
        .run()
        .map(|_| ()),
        Command::Pilot {
            data,
            out,
            config,
            resolution,
            epochs,
            seed,
        } => {
            let mut c: SteerConfig = load_config(config.as_deref())?;
            set(&mut c.pilot.epochs, epochs);
            set(&mut c.pilot.seed, seed);
            let resolution = match resolution {
                Some(r) => r,
                None => DatasetIndex::read(&data)?
                    .resolution
                    .ok_or_else(|| anyhow::anyhow!("dataset has no resolution; pass --resolution"))?,
            };
            PilotRun {
                data,
                out,
                resolution,
                steering_ratio: c.steering_ratio,
                pilot: c.pilot,
            }
            .run()
        }
        Command::Steer {
            derain_checkpoint,
            pilot_checkpoint,
            data,
            out,
            config,
            exclude,
            steering_ratio,
            pilot_epochs,
        } => {
            let mut c: SteerConfig = load_config(config.as_deref())?;
            c.exclude.extend(exclude);
            set(&mut c.steering_ratio, steering_ratio);
            set(&mut c.pilot.epochs, pilot_epochs);
            SteerRun {
                derain_checkpoint,
                pilot_checkpoint,
                data,
                out,
                steer: c,
            }
            .run()
        }
        Command::Compare {
            checkpoint,
            data,
            map,
            frames,
            strip,
            baseline,
            out,
        } => CompareRun {
            checkpoint,
            data,
            map,
            frames,
            strip,
            baseline,
            out,
        }
        .run(),
        Command::Replay { manifest, out, force } => {
            let m = RunManifest::read(&manifest)?;
            replay(&m, &out, force)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    if !manifest::deterministic_mode() {
        log::warn!("{DETERMINISTIC_ENV} is off, but the CPU backend is always deterministic");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
