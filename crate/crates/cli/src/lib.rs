//! Command-line front end for the facefake pipeline.
//!
//! Every command reads one [`config::RunConfig`]: built-in defaults, then a
//! TOML/JSON file (`--config` or `FACEFAKE_CONFIG`), then `--set key=value`
//! pairs, then the command's own flags.

pub mod commands;
pub mod config;
pub mod error;

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "facefake",
    version,
    about = "Deepfake video detection: synth, extract, train, predict, evaluate"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML or JSON run configuration.
    #[arg(long, global = true, env = "FACEFAKE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Global seed (overrides the synth, detector and training seeds).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Outputs are reproducible only with 1.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Override any config leaf, e.g. `--set training.base_lr=0.02`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic video dataset with labels.
    Synth(SynthArgs),
    /// Train the three detector stages on synthetic annotated frames.
    TrainDetector(TrainDetectorArgs),
    /// Detect faces, write crops, SSIM masks and a manifest.
    Extract(ExtractArgs),
    /// Train the classifier on a manifest.
    Train(TrainArgs),
    /// Predict video-level fake probabilities.
    Predict(PredictArgs),
    /// Score predictions against labels.
    Evaluate(EvaluateArgs),
    /// Print the resolved configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_videos: Option<usize>,
    #[arg(long)]
    pub fake_fraction: Option<f64>,
    #[arg(long)]
    pub frames_per_video: Option<usize>,
    #[arg(long)]
    pub folders: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TrainDetectorArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Synthetic videos to draw annotated frames from.
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    /// Use every n-th frame.
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of videos (frame directories or container files).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub frames_per_video: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Trained detector directory; blob scorers when omitted.
    #[arg(long)]
    pub detector_weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub width_budget: Option<f64>,
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Holdout folders, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Video directory or crop manifest (.json).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only predict videos in these folders (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub folders: Vec<u32>,
    #[arg(long)]
    pub frames_per_video: Option<usize>,
    #[arg(long)]
    pub detector_weights: Option<PathBuf>,
    #[arg(long)]
    pub low_conf: Option<f64>,
    #[arg(long)]
    pub high_conf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `filename,label` CSV of fake probabilities.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// `filename,label` CSV or metadata JSON.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Default)]
struct Flags(Vec<(String, Value)>);

impl Flags {
    fn add<T: Serialize>(&mut self, key: &str, v: &Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0
                .push((key.to_string(), serde_json::to_value(v).expect("flag serializes")));
        }
        self
    }
}

impl Command {
    /// Flags that map onto config leaves.
    fn overrides(&self) -> Vec<(String, Value)> {
        let mut f = Flags::default();
        match self {
            Command::Synth(a) => {
                f.add("paths.output", &a.out)
                    .add("synth.n_videos", &a.n_videos)
                    .add("synth.fake_fraction", &a.fake_fraction)
                    .add("synth.frames_per_video", &a.frames_per_video)
                    .add("synth.folders", &a.folders);
            }
            Command::TrainDetector(a) => {
                f.add("paths.output", &a.out).add("detector.train.steps", &a.steps);
            }
            Command::Extract(a) => {
                f.add("paths.input", &a.input)
                    .add("paths.output", &a.out)
                    .add("preprocess.sampling.frames_per_video", &a.frames_per_video)
                    .add("preprocess.margin", &a.margin)
                    .add("detector.weights", &a.detector_weights);
            }
            Command::Train(a) => {
                let holdout = (!a.holdout.is_empty()).then(|| a.holdout.clone());
                f.add("paths.manifest", &a.manifest)
                    .add("paths.output", &a.out)
                    .add("classifier.variant", &a.variant)
                    .add("classifier.width_budget", &a.width_budget)
                    .add("classifier.input_size", &a.input_size)
                    .add("training.total_steps", &a.steps)
                    .add("training.batch_size", &a.batch_size)
                    .add("training.base_lr", &a.lr)
                    .add("training.holdout_folders", &holdout);
            }
            Command::Predict(a) => {
                f.add("paths.input", &a.input)
                    .add("paths.checkpoint", &a.checkpoint)
                    .add("paths.output", &a.out)
                    .add("preprocess.sampling.frames_per_video", &a.frames_per_video)
                    .add("detector.weights", &a.detector_weights)
                    .add("aggregation.low_conf", &a.low_conf)
                    .add("aggregation.high_conf", &a.high_conf);
            }
            Command::Evaluate(a) => {
                f.add("paths.predictions", &a.predictions)
                    .add("paths.labels", &a.labels)
                    .add("paths.output", &a.out)
                    .add("evaluation.threshold", &a.threshold);
            }
            Command::Config => {}
        }
        f.0
    }
}

/// Resolve the configuration for a parsed command line.
pub fn resolve_config(cli: &Cli) -> Result<config::RunConfig, CliError> {
    let mut flags = Flags::default();
    flags.add("seed", &cli.global.seed).add("workers", &cli.global.workers);
    flags.0.extend(cli.command.overrides());
    config::resolve(cli.global.config.as_deref(), &cli.global.sets, &flags.0)
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let workers = match cfg.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    facefake_core::with_workers(workers, || match &cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::TrainDetector(a) => commands::train_detector(
            &cfg,
            commands::DetectorData {
                videos: a.videos,
                stride: a.stride,
            },
        ),
        Command::Extract(_) => commands::extract(&cfg),
        Command::Train(_) => commands::train_classifier(&cfg),
        Command::Predict(a) => commands::predict(&cfg, &a.folders.iter().copied().collect::<BTreeSet<u32>>()),
        Command::Evaluate(_) => commands::evaluate_cmd(&cfg),
        Command::Config => {
            let text = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
    })
}
