use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};

use affgan_core::augment::augment_dataset;
use affgan_core::classify::{results_csv, FreezeMode};
use affgan_core::data::{
    build_dataset, category_csv, dataset_report_markdown, quadrant_csv, synth_category_fixture, synth_fixture,
    AffectiveDataset, FixtureOptions,
};
use affgan_core::experiment::{
    echo_config, load_dataset, load_font, plan_grid, prepare_output_dir, run_classification, run_grid, run_single,
    write_report, DatasetEntry, ExperimentConfig, GridOptions,
};
use affgan_core::models::{DiscVariant, Family, ModelSpec};

use crate::{ClassifyArgs, Cli, Command, DatasetCommand, GridArgs, ReportArgs, TrainArgs, TrainOverrides};

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    let out = cli.out.clone();
    let need_out = || out.clone().ok_or_else(|| anyhow!("--out DIR is required for this command"));
    match cli.command {
        Command::Dataset(cmd) => dataset(cmd, &config, &need_out()?, cli.resume),
        Command::Train(args) => train(args, config, &need_out()?, cli.resume),
        Command::Grid(args) => grid(args, config, &need_out()?, cli.resume),
        Command::Report(args) => report(args, out),
        Command::Classify(args) => classify(args, config, &need_out()?, cli.resume),
    }
}

fn write_dataset(ds: &AffectiveDataset, out: &Path) -> Result<()> {
    ds.write_csv(&out.join("dataset.csv"))?;
    std::fs::write(out.join("quadrants.csv"), quadrant_csv(ds))?;
    std::fs::write(out.join("categories.csv"), category_csv(ds))?;
    let md = dataset_report_markdown(ds);
    std::fs::write(out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn dataset(cmd: DatasetCommand, config: &ExperimentConfig, out: &Path, resume: bool) -> Result<()> {
    prepare_output_dir(out, resume)?;
    match cmd {
        DatasetCommand::Build { manifests } => {
            let ds = build_dataset(&manifests, &config.data)?;
            write_dataset(&ds, out)
        }
        DatasetCommand::Augment { dataset } => {
            let ds = AffectiveDataset::read_csv(&dataset, &config.data.category_map)?;
            let augmented = augment_dataset(&ds, &out.join("images"))?;
            info!("{} records → {}", ds.len(), augmented.len());
            write_dataset(&augmented, out)
        }
        DatasetCommand::Fixture { count, per_class, size } => {
            let opts = FixtureOptions {
                image_size: size,
                ..FixtureOptions::default()
            };
            let manifest = match per_class {
                Some(k) => synth_category_fixture(k, config.seed, out, &config.data.category_map, &opts)?,
                None => synth_fixture(count, config.seed, out, &opts)?,
            };
            println!("{}", manifest.display());
            Ok(())
        }
    }
}

fn is_dataset_csv(path: &Path) -> Result<bool> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(reader.headers()?.iter().any(|h| h == "category"))
}

/// Dataset id for a path: the file stem, or the parent directory's name for
/// generic stems such as `manifest.csv`.
fn id_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let id = if path.is_file() && matches!(stem.as_str(), "manifest" | "dataset") {
        path.parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(stem)
    } else {
        stem
    };
    id.replace("__", "_")
}

/// `--dataset` values: config ids, or paths (optionally `name=path`).
fn resolve_datasets(config: &ExperimentConfig, args: &[String]) -> Result<Vec<DatasetEntry>> {
    if args.is_empty() {
        return Ok(config.grid.datasets.clone());
    }
    let mut out = Vec::new();
    for arg in args {
        if let Some(e) = config.grid.datasets.iter().find(|d| &d.id == arg) {
            out.push(e.clone());
            continue;
        }
        let (name, path) = match arg.split_once('=') {
            Some((n, p)) if !n.contains(['/', '\\']) => (Some(n.to_string()), PathBuf::from(p)),
            _ => (None, PathBuf::from(arg)),
        };
        if !path.exists() {
            bail!("--dataset `{arg}` is neither a configured dataset id nor an existing path");
        }
        let mut entry = DatasetEntry {
            id: name.unwrap_or_else(|| id_for(&path)),
            ..Default::default()
        };
        if path.is_dir() {
            entry.image_dir = Some(path);
        } else if is_dataset_csv(&path)? {
            entry.csv = Some(path);
        } else {
            entry.manifests = vec![path];
        }
        out.push(entry);
    }
    Ok(out)
}

fn apply_train_overrides(config: &mut ExperimentConfig, o: &TrainOverrides) -> Result<()> {
    if let Some(v) = o.epochs {
        config.train.epochs = v;
    }
    if let Some(v) = o.eval_every {
        config.train.eval_every_epochs = v;
    }
    if let Some(v) = o.batch_size {
        config.train.batch_size = v;
    }
    if let Some(v) = o.metric_batch {
        config.train.metric_batch = v;
    }
    if let Some(v) = o.image_size {
        config.model.image_size = v;
    }
    config.grid.datasets = resolve_datasets(config, &o.datasets)?;
    Ok(())
}

fn train(args: TrainArgs, mut config: ExperimentConfig, out: &Path, resume: bool) -> Result<()> {
    let family: Family = args.family.parse()?;
    let variant: DiscVariant = args.variant.parse()?;
    apply_train_overrides(&mut config, &args.train)?;
    let [entry] = config.grid.datasets.as_slice() else {
        bail!("train needs exactly one dataset (got {}); pass --dataset", config.grid.datasets.len());
    };
    let entry = entry.clone();
    config.grid.models = vec![ModelSpec::new(family, variant).id()];
    config.validate()?;

    prepare_output_dir(out, resume)?;
    echo_config(&config, out)?;
    let data = load_dataset(&entry, &config.data, config.model.image_size)?;
    let cells = plan_grid(&config, std::slice::from_ref(&data))?;
    let extractor = config.metrics.build()?;
    let result = run_single(&cells[0], &data, extractor.as_ref(), out, resume)?;

    println!("model {} on {}", result.model_id, result.dataset_id);
    println!("epoch,fid,kid,pagan_level");
    for p in &result.trajectory {
        println!("{},{},{},{}", p.epoch, p.fid, p.kid, p.pagan_level);
    }
    match result.best_epoch {
        Some(e) => println!("best FID {} (KID {}) at epoch {e}", result.best_fid, result.best_kid),
        None => println!("no evaluation epoch reached"),
    }
    Ok(())
}

fn grid(args: GridArgs, mut config: ExperimentConfig, out: &Path, resume: bool) -> Result<()> {
    apply_train_overrides(&mut config, &args.train)?;
    if !args.models.is_empty() {
        config.grid.models = args.models;
    }
    if let Some(r) = args.repeats {
        config.grid.repeats = r;
    }
    if let Some(w) = args.workers {
        config.grid.workers = w;
    }
    if config.grid.datasets.is_empty() {
        bail!("no datasets: list them under [[grid.datasets]] or pass --dataset");
    }
    config.validate()?;

    prepare_output_dir(out, resume)?;
    echo_config(&config, out)?;
    let datasets = config
        .grid
        .datasets
        .iter()
        .map(|d| load_dataset(d, &config.data, config.model.image_size))
        .collect::<Result<Vec<_>, _>>()?;
    let cells = plan_grid(&config, &datasets)?;
    info!("{} cells ({} models × {} datasets)", cells.len(), config.grid.models.len(), datasets.len());
    let extractor = config.metrics.build()?;
    let options = GridOptions {
        workers: config.grid.workers,
        repeats: config.grid.repeats,
        resume,
    };
    let table = run_grid(&cells, &datasets, extractor.as_ref(), out, &options)?;
    write_report(out, &out.join("report"), load_font(None).as_ref())?;
    print!("{}", table.to_markdown());
    if table.failed() > 0 {
        warn!("{} of {} cells failed; see cells/*/error.txt", table.failed(), table.len());
    }
    Ok(())
}

fn report(args: ReportArgs, out: Option<PathBuf>) -> Result<()> {
    let out = out.unwrap_or_else(|| args.results.join("report"));
    let font = load_font(args.font.as_deref());
    if font.is_none() {
        warn!("no font found; charts are drawn without labels (pass --font)");
    }
    let summary = write_report(&args.results, &out, font.as_ref())?;
    print!("{}", summary.table.to_markdown());
    println!(
        "{} line plot(s), {} bar chart(s), {} sample grid(s) in {}",
        summary.line_plots.len(),
        summary.bar_charts.len(),
        summary.sample_grids.len(),
        out.display()
    );
    Ok(())
}

fn classify(args: ClassifyArgs, mut config: ExperimentConfig, out: &Path, resume: bool) -> Result<()> {
    if let Some(e) = args.epochs {
        config.classify.epochs = e;
    }
    if !args.presets.is_empty() {
        config.classify.presets = args.presets;
    }
    if let Some(dir) = args.backbone_dir {
        config.classify.backbone_dir = Some(dir);
    }
    if let Some(mode) = args.freeze_mode {
        config.classify.freeze_mode = mode.parse::<FreezeMode>()?;
    }
    config.grid.datasets = resolve_datasets(&config, &args.datasets)?;
    if config.grid.datasets.is_empty() {
        bail!("no datasets: list them under [[grid.datasets]] or pass --dataset");
    }
    config.validate()?;

    prepare_output_dir(out, resume)?;
    echo_config(&config, out)?;
    let results = run_classification(&config, out)?;
    if results.is_empty() {
        bail!("no dataset with affective labels to classify");
    }
    print!("{}", results_csv(&results));
    for r in &results {
        println!(
            "{} on {}: best validation accuracy {:.4} at epoch {}",
            r.backbone, r.dataset, r.best_val_accuracy, r.best_epoch
        );
    }
    Ok(())
}
