//! `affgan`: build affective datasets, train GAN variants, run the ablation
//! grid, render reports and fine-tune classifiers.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "affgan", version, about = "Affective image GAN ablation toolkit")]
pub struct Cli {
    /// Experiment config (TOML); defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; must be empty unless --resume.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Continue a previous run in --out.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dataset preparation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train one model on one dataset.
    Train(TrainArgs),
    /// Train every model × dataset cell and write the score table and report.
    Grid(GridArgs),
    /// Regenerate plots, sample grids and tables from a results directory.
    Report(ReportArgs),
    /// Fine-tune classifier backbones on the 13-category labels.
    Classify(ClassifyArgs),
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Build a labelled dataset CSV from rating manifests.
    Build {
        /// Manifest CSV (`image_path,source,valence_raw,arousal_raw`); repeatable.
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Write seven augmented variants per image and the 8× dataset CSV.
    Augment {
        /// Built dataset CSV.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write a synthetic image fixture and its manifest.
    Fixture {
        /// Number of images (rating-driven colour fields).
        #[arg(long, default_value_t = 1000, conflicts_with = "per_class")]
        count: usize,
        /// Images per category instead: separable flat-colour classes.
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, default_value_t = 64)]
        size: u32,
    },
}

/// Flags shared by commands that train GANs.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Real and generated images per FID/KID evaluation.
    #[arg(long)]
    pub metric_batch: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Dataset: an id from the config, a built dataset or manifest CSV, or
    /// an image directory; `name=path` names a path. Repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// dcgan | cgan | acgan | pagan | wgan_gp
    #[arg(long, default_value = "dcgan")]
    pub family: String,
    /// batch_norm | dropout | spectral_norm
    #[arg(long, default_value = "batch_norm")]
    pub variant: String,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Model ids (`family-variant`); defaults to the config's list.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Results directory of a `grid` run.
    pub results: PathBuf,
    /// TrueType font for chart labels (a system font is searched otherwise).
    #[arg(long)]
    pub font: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Backbone preset (resnet18, resnet152, vgg19, efficientnet_b7); repeatable.
    #[arg(long = "preset")]
    pub presets: Vec<String>,
    /// Directory holding `<preset>.pt` TorchScript exports.
    #[arg(long)]
    pub backbone_dir: Option<PathBuf>,
    /// head_only | full_fine_tune
    #[arg(long)]
    pub freeze_mode: Option<String>,
    /// Dataset ids, CSVs or manifests as for `train`; repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
