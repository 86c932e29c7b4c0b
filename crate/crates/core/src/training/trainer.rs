use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::checkpoint::{checkpoint_file_name, latest_checkpoint, Checkpoint};
use super::step::random_labels;
use super::{gan_step, pagan_schedule, wgan_gp_step, GanPair, StepInfo, StepLosses, TrainConfig, TrainError};
use crate::data::AffectiveDataset;
use crate::imaging::{image_grid, load_rgb, save_png, ImageBatch};
use crate::metrics::{score_batches, FeatureExtractor};
use crate::models::{Family, ModelSpec};
use crate::rng::stream;

pub const LOSSES_HEADER: &str = "epoch,step,loss_d,loss_g,gp,pagan_level";
pub const TRAJECTORY_HEADER: &str = "epoch,fid,kid,pagan_level";
/// Side of the square sample grid written at each evaluation.
pub const SAMPLE_GRID_SIDE: usize = 8;

/// One FID/KID evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub epoch: usize,
    pub fid: f64,
    pub kid: f64,
    /// Augmentation level the discriminator had while being evaluated.
    pub pagan_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub gp: Option<f64>,
    pub pagan_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model_id: String,
    pub dataset_id: String,
    pub trajectory: Vec<EvalPoint>,
    /// `NaN` when the run had no evaluation.
    pub best_fid: f64,
    pub best_kid: f64,
    pub best_epoch: Option<usize>,
    pub pagan_level_trace: Vec<usize>,
    pub checkpoints: Vec<PathBuf>,
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub losses: Vec<LossRecord>,
}

/// Where and how a run writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub model_id: String,
    pub dataset_id: String,
    /// Directory for logs, checkpoints and sample grids; `None` keeps the
    /// run in memory.
    pub out_dir: Option<PathBuf>,
    /// Continue from the newest checkpoint in `out_dir/checkpoints`.
    pub resume: bool,
}

/// Training images decoded once and kept as 8-bit CHW planes.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    size: usize,
    pixels: Vec<u8>,
    labels: Vec<i64>,
    num_classes: usize,
}

impl TrainingSet {
    /// Decodes every record at `image_size`; labels are category indices.
    pub fn from_dataset(ds: &AffectiveDataset, image_size: usize) -> Result<Self, TrainError> {
        let mut images = Vec::with_capacity(ds.len());
        for r in ds.records() {
            images.push(load_rgb(&r.image_path, Some(image_size as u32))?);
        }
        let labels = ds.class_indices().into_iter().map(|c| c as i64).collect();
        Self::from_images(&images, labels, ds.category_map().num_classes())
    }

    pub fn from_images(images: &[RgbImage], labels: Vec<i64>, num_classes: usize) -> Result<Self, TrainError> {
        if images.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let (w, h) = images[0].dimensions();
        if w != h || labels.len() != images.len() {
            return Err(TrainError::InvalidConfig("training images must be square and labelled".into()));
        }
        let plane = (w * h) as usize;
        let mut pixels = Vec::with_capacity(images.len() * 3 * plane);
        for img in images {
            if img.dimensions() != (w, h) {
                return Err(TrainError::InvalidConfig("training images differ in size".into()));
            }
            for c in 0..3 {
                pixels.extend(img.pixels().map(|p| p.0[c]));
            }
        }
        Ok(Self {
            size: w as usize,
            pixels,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_batch(&self, indices: &[usize]) -> ImageBatch {
        let stride = 3 * self.size * self.size;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend(self.pixels[i * stride..(i + 1) * stride].iter().map(|&v| v as f32 / 127.5 - 1.0));
        }
        ImageBatch::new(indices.len(), 3, self.size, self.size, data).expect("consistent batch shape")
    }

    /// `(n, 3, s, s)` images and `(n)` labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let labels: Vec<i64> = indices.iter().map(|&i| self.labels[i]).collect();
        (self.image_batch(indices).to_tensor(), Tensor::from_slice(&labels))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), TrainError> {
    std::fs::write(path, contents).map_err(|e| TrainError::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn losses_csv(losses: &[LossRecord]) -> String {
    let mut s = format!("{LOSSES_HEADER}\n");
    for l in losses {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            l.epoch,
            l.step,
            l.loss_d,
            l.loss_g,
            fmt_opt(l.gp),
            l.pagan_level
        );
    }
    s
}

pub fn trajectory_csv(trajectory: &[EvalPoint]) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\n");
    for p in trajectory {
        let _ = writeln!(s, "{},{},{},{}", p.epoch, p.fid, p.kid, p.pagan_level);
    }
    s
}

/// Parses a losses log written by this module.
pub fn read_losses_csv(path: &Path) -> Result<Vec<LossRecord>, TrainError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| TrainError::Log(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| TrainError::Log(format!("{}: {e}", path.display())))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize| TrainError::Log(format!("{}: bad value `{}`", path.display(), field(i)));
        out.push(LossRecord {
            epoch: field(0).parse().map_err(|_| bad(0))?,
            step: field(1).parse().map_err(|_| bad(1))?,
            loss_d: field(2).parse().map_err(|_| bad(2))?,
            loss_g: field(3).parse().map_err(|_| bad(3))?,
            gp: if field(4).is_empty() {
                None
            } else {
                Some(field(4).parse().map_err(|_| bad(4))?)
            },
            pagan_level: field(5).parse().map_err(|_| bad(5))?,
        });
    }
    Ok(out)
}

/// Generates `n` images in chunks of `chunk` (batch-statistics BN).
fn generate(pair: &GanPair, n: usize, chunk: usize, seed: u64, tag: &str, index: u64) -> Result<ImageBatch, TrainError> {
    let mut rng = stream(seed, tag, index);
    let spec = pair.spec();
    let mut data = Vec::with_capacity(n * spec.channels * spec.image_size * spec.image_size);
    let mut done = 0;
    while done < n {
        let take = chunk.min(n - done).max(2.min(n - done));
        let z = pair.generator.sample_latent(take, &mut rng);
        let labels = random_labels(take, spec.num_classes, &mut rng);
        let x = tch::no_grad(|| pair.generator.forward(&z, labels.as_ref()))?;
        data.extend_from_slice(ImageBatch::from_tensor(&x)?.data());
        done += take;
    }
    Ok(ImageBatch::new(n, spec.channels, spec.image_size, spec.image_size, data)?)
}

fn dir_is_empty(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut it| it.next().is_none()).unwrap_or(true)
}

struct RunState {
    pair: GanPair,
    next_epoch: usize,
    global_step: u64,
    trajectory: Vec<EvalPoint>,
    losses: Vec<LossRecord>,
    checkpoints: Vec<PathBuf>,
}

fn initial_state(spec: &ModelSpec, config: &TrainConfig, options: &RunOptions) -> Result<RunState, TrainError> {
    let fresh = || -> Result<RunState, TrainError> {
        Ok(RunState {
            pair: GanPair::new(spec, config)?,
            next_epoch: 1,
            global_step: 0,
            trajectory: Vec::new(),
            losses: Vec::new(),
            checkpoints: Vec::new(),
        })
    };
    let Some(dir) = &options.out_dir else {
        return fresh();
    };
    if !options.resume {
        if !dir_is_empty(dir) {
            return Err(TrainError::OutputNotEmpty(dir.clone()));
        }
        return fresh();
    }
    let Some((_, path)) = latest_checkpoint(&dir.join("checkpoints"))? else {
        log::info!("no checkpoint under {}; starting fresh", dir.display());
        return fresh();
    };
    let ckpt = Checkpoint::load(&path, Some(spec))?;
    if !config.resumable_from(&ckpt.config) {
        return Err(TrainError::InvalidConfig(format!(
            "{} was written with a different training config",
            path.display()
        )));
    }
    let losses_path = dir.join("losses.csv");
    let losses = if losses_path.exists() {
        read_losses_csv(&losses_path)?
            .into_iter()
            .filter(|l| l.epoch <= ckpt.epoch)
            .collect()
    } else {
        Vec::new()
    };
    let mut checkpoints = Vec::new();
    for p in &ckpt.trajectory {
        let c = dir.join("checkpoints").join(checkpoint_file_name(p.epoch));
        if c.exists() {
            checkpoints.push(c);
        }
    }
    log::info!("resuming {} from epoch {}", dir.display(), ckpt.epoch);
    Ok(RunState {
        pair: ckpt.restore()?,
        next_epoch: ckpt.epoch + 1,
        global_step: ckpt.global_step,
        trajectory: ckpt.trajectory,
        losses,
        checkpoints,
    })
}

/// Trains one model for `config.epochs` epochs, evaluating FID/KID every
/// `eval_every_epochs` epochs on `metric_batch` real and generated images
/// and checkpointing at each evaluation.
///
/// All randomness is derived from `config.seed` per (purpose, step), so a run
/// resumed from a checkpoint continues exactly as the uninterrupted run.
pub fn train(
    spec: &ModelSpec,
    data: &TrainingSet,
    config: &TrainConfig,
    extractor: &dyn FeatureExtractor,
    options: &RunOptions,
) -> Result<RunResult, TrainError> {
    spec.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.image_size() != spec.image_size || spec.channels != 3 {
        return Err(TrainError::InvalidConfig(format!(
            "data is {}px RGB but the model expects {}px with {} channels",
            data.image_size(),
            spec.image_size,
            spec.channels
        )));
    }
    if spec.family.is_conditional() && spec.num_classes < data.num_classes() {
        return Err(TrainError::InvalidConfig(format!(
            "model has {} classes but the data has {}",
            spec.num_classes,
            data.num_classes()
        )));
    }
    let started = Instant::now();
    let mut state = initial_state(spec, config, options)?;
    if let Some(dir) = &options.out_dir {
        for sub in ["checkpoints", "samples"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| TrainError::io(&p, e))?;
        }
    }
    let max_level = config.pagan_max_level.min(spec.pagan_max_level);
    let conditional = spec.family.is_conditional();
    let n = data.len();
    let batch = config.batch_size.min(n);

    for epoch in state.next_epoch..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(config.seed, "shuffle", epoch as u64));
        for idx in order.chunks(batch).filter(|c| c.len() >= 2) {
            let (real, labels) = data.batch(idx);
            let mut rng = stream(config.seed, "step", state.global_step);
            let info = StepInfo {
                seed: config.seed,
                epoch,
                step: state.global_step,
            };
            let StepLosses { loss_d, loss_g, gp } = if spec.family == Family::WganGp {
                wgan_gp_step(&mut state.pair, &real, config, &mut rng, info)?
            } else {
                gan_step(&mut state.pair, &real, conditional.then_some(&labels), config, &mut rng, info)?
            };
            state.losses.push(LossRecord {
                epoch,
                step: state.global_step,
                loss_d,
                loss_g,
                gp,
                pagan_level: state.pair.discriminator.pagan_level(),
            });
            state.global_step += 1;
        }

        if epoch % config.eval_every_epochs == 0 {
            let mut rng = stream(config.seed, "eval-real", epoch as u64);
            let count = config.metric_batch.min(n);
            let real_idx: Vec<usize> = rand::seq::index::sample(&mut rng, n, count).into_vec();
            let real = data.image_batch(&real_idx);
            let fake = generate(&state.pair, config.metric_batch, config.batch_size, config.seed, "eval-fake", epoch as u64)?;
            let scores = score_batches(&real, &fake, extractor)?;
            let level = state.pair.discriminator.pagan_level();
            state.trajectory.push(EvalPoint {
                epoch,
                fid: scores.fid,
                kid: scores.kid,
                pagan_level: level,
            });
            log::info!(
                "{} epoch {epoch}: FID {:.4} KID {:.5} level {level}",
                options.model_id,
                scores.fid,
                scores.kid
            );
            if spec.family == Family::Pagan {
                let kids: Vec<f64> = state.trajectory.iter().map(|p| p.kid).collect();
                let target = pagan_schedule(&kids, config).min(max_level);
                if target > level {
                    log::info!("{}: PAGAN level {level} -> {target}", options.model_id);
                    state.pair.discriminator.grow(target)?;
                }
            }
            if let Some(dir) = &options.out_dir {
                let path = dir.join("checkpoints").join(checkpoint_file_name(epoch));
                Checkpoint::capture(&state.pair, config, epoch, state.global_step, &state.trajectory).save(&path)?;
                state.checkpoints.push(path);
                let samples = generate(
                    &state.pair,
                    SAMPLE_GRID_SIDE * SAMPLE_GRID_SIDE,
                    config.batch_size,
                    config.seed,
                    "sample-grid",
                    0,
                )?;
                let grid = image_grid(&samples, SAMPLE_GRID_SIDE, SAMPLE_GRID_SIDE);
                save_png(&grid, &dir.join("samples").join(format!("epoch_{epoch:04}.png")))?;
                write_file(&dir.join("trajectory.csv"), &trajectory_csv(&state.trajectory))?;
            }
        }
        if let Some(dir) = &options.out_dir {
            write_file(&dir.join("losses.csv"), &losses_csv(&state.losses))?;
        }
    }

    if let Some(dir) = &options.out_dir {
        write_file(&dir.join("trajectory.csv"), &trajectory_csv(&state.trajectory))?;
    }
    let best = state
        .trajectory
        .iter()
        .min_by(|a, b| a.fid.total_cmp(&b.fid));
    Ok(RunResult {
        model_id: options.model_id.clone(),
        dataset_id: options.dataset_id.clone(),
        best_fid: best.map_or(f64::NAN, |p| p.fid),
        best_kid: state
            .trajectory
            .iter()
            .map(|p| p.kid)
            .fold(f64::NAN, f64::min),
        best_epoch: best.map(|p| p.epoch),
        pagan_level_trace: state.trajectory.iter().map(|p| p.pagan_level).collect(),
        trajectory: state.trajectory,
        checkpoints: state.checkpoints,
        wall_time_secs: started.elapsed().as_secs_f64(),
        losses: state.losses,
    })
}
