use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{parse_model_id, ExperimentConfig, ExperimentError, LoadedDataset};
use crate::metrics::FeatureExtractor;
use crate::models::{DiscVariant, Family, ModelSpec};
use crate::rng::derive_seed;
use crate::training::{train, RunOptions, RunResult, TrainConfig};

pub const SCORE_HEADER: &str = "model,dataset,best_fid,best_kid,best_epoch,repeats,status,error";
pub const RESULT_FILE: &str = "result.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.txt";

/// Provenance written next to every run before it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_id: String,
    pub dataset_id: String,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub dataset_hash: String,
}

/// One (model, dataset) cell of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub spec: ModelSpec,
    pub dataset_id: String,
    pub config: TrainConfig,
}

impl GridCell {
    pub fn model_id(&self) -> String {
        self.spec.id()
    }

    pub fn dir_name(&self) -> String {
        format!("{}__{}", self.model_id(), self.dataset_id)
    }
}

/// Seed of repeat `r`; repeat 0 keeps the configured seed, so a 1-repeat
/// cell is the same run `affgan train` performs.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, "repeat", r as u64)
    }
}

/// Cells in canonical order: models as listed, datasets as listed.
pub fn plan_grid(config: &ExperimentConfig, datasets: &[LoadedDataset]) -> Result<Vec<GridCell>, ExperimentError> {
    let mut cells = Vec::new();
    for m in &config.grid.models {
        let (family, variant) = parse_model_id(m)?;
        for d in datasets {
            let train = config.cell_train_config(m, &d.id)?;
            cells.push(GridCell {
                spec: config.model.spec(family, variant, d.set.num_classes(), train.pagan_max_level),
                dataset_id: d.id.clone(),
                config: train,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model_id: String,
    pub dataset: String,
    /// Median over repeats; `NaN` for failed cells.
    pub best_fid: f64,
    pub best_kid: f64,
    /// Only meaningful for single-repeat cells.
    pub best_epoch: Option<usize>,
    pub repeats: usize,
    pub status: CellStatus,
    pub error: String,
}

// Scores compare bitwise so that two failed (NaN) rows are equal.
impl PartialEq for ScoreRow {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id
            && self.dataset == other.dataset
            && self.best_fid.to_bits() == other.best_fid.to_bits()
            && self.best_kid.to_bits() == other.best_kid.to_bits()
            && self.best_epoch == other.best_epoch
            && self.repeats == other.repeats
            && self.status == other.status
            && self.error == other.error
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.retain(|x| !x.is_nan());
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

impl ScoreRow {
    pub fn from_results(model_id: &str, dataset: &str, results: &[RunResult]) -> Self {
        Self {
            model_id: model_id.to_string(),
            dataset: dataset.to_string(),
            best_fid: median(results.iter().map(|r| r.best_fid).collect()),
            best_kid: median(results.iter().map(|r| r.best_kid).collect()),
            best_epoch: match results {
                [only] => only.best_epoch,
                _ => None,
            },
            repeats: results.len(),
            status: CellStatus::Ok,
            error: String::new(),
        }
    }

    pub fn failed(model_id: &str, dataset: &str, repeats: usize, error: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            dataset: dataset.to_string(),
            best_fid: f64::NAN,
            best_kid: f64::NAN,
            best_epoch: None,
            repeats,
            status: CellStatus::Failed,
            error: error.lines().next().unwrap_or("").to_string(),
        }
    }

    /// Table label such as `PAGAN SN.`; the raw id when it does not parse.
    pub fn model_label(&self) -> String {
        parse_model_id(&self.model_id)
            .map(|(f, v)| ModelSpec::new(f, v).label())
            .unwrap_or_else(|_| self.model_id.clone())
    }

    fn sort_key(&self) -> (usize, usize, String, String) {
        let (f, v) = parse_model_id(&self.model_id)
            .map(|(f, v)| {
                (
                    Family::ALL.iter().position(|&x| x == f).unwrap_or(usize::MAX),
                    DiscVariant::ALL.iter().position(|&x| x == v).unwrap_or(usize::MAX),
                )
            })
            .unwrap_or((usize::MAX, usize::MAX));
        (f, v, self.model_id.clone(), self.dataset.clone())
    }
}

/// Best scores per cell, kept in canonical order (family, variant,
/// dataset id) whatever order the cells finished in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
}

fn fmt_num(x: f64, digits: usize) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.digits$}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ScoreTable {
    pub fn new(mut rows: Vec<ScoreRow>) -> Self {
        rows.sort_by_key(ScoreRow::sort_key);
        Self { rows }
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.status == CellStatus::Failed).count()
    }

    /// Full-precision CSV (`{}` formatting round-trips every f64).
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SCORE_HEADER}\n");
        for r in &self.rows {
            let num = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.model_id),
                csv_field(&r.dataset),
                num(r.best_fid),
                num(r.best_kid),
                r.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
                r.repeats,
                r.status.as_str(),
                csv_field(&r.error)
            );
        }
        s
    }

    /// Model | Dataset | FID | KID, model names printed once per group.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Model | Dataset | FID score | KID score |\n|---|---|---:|---:|\n");
        let mut last = None;
        for r in &self.rows {
            let label = if last == Some(&r.model_id) { String::new() } else { r.model_label() };
            last = Some(&r.model_id);
            let (fid, kid) = match r.status {
                CellStatus::Ok => (fmt_num(r.best_fid, 4), fmt_num(r.best_kid, 6)),
                CellStatus::Failed => ("failed".into(), "failed".into()),
            };
            let _ = writeln!(s, "| {label} | {} | {fid} | {kid} |", r.dataset);
        }
        s
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| ExperimentError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Run directories of a cell: the cell directory itself, or `rep_XX`
/// sub-directories when repeated.
pub fn run_dirs(cell_dir: &Path, repeats: usize) -> Vec<PathBuf> {
    if repeats == 1 {
        vec![cell_dir.to_path_buf()]
    } else {
        (0..repeats).map(|r| cell_dir.join(format!("rep_{r:02}"))).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct GridOptions {
    pub workers: usize,
    pub repeats: usize,
    pub resume: bool,
}

fn run_one(
    cell: &GridCell,
    data: &LoadedDataset,
    extractor: &dyn FeatureExtractor,
    dir: &Path,
    seed: u64,
    resume: bool,
) -> Result<RunResult, ExperimentError> {
    let config = TrainConfig {
        seed,
        ..cell.config.clone()
    };
    let manifest = RunManifest {
        model_id: cell.model_id(),
        dataset_id: cell.dataset_id.clone(),
        spec: cell.spec.clone(),
        config: config.clone(),
        dataset_hash: data.content_hash.clone(),
    };
    let result_path = dir.join(RESULT_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    // A finished run is reused only if nothing changed; a longer schedule
    // continues from the latest checkpoint instead.
    if resume && result_path.is_file() && read_json::<RunManifest>(&manifest_path).is_ok_and(|m| m == manifest) {
        return read_json(&result_path);
    }
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let _ = std::fs::remove_file(dir.join(ERROR_FILE));
    let _ = std::fs::remove_file(&result_path);
    write_json(&manifest_path, &manifest)?;
    let options = RunOptions {
        model_id: cell.model_id(),
        dataset_id: cell.dataset_id.clone(),
        out_dir: Some(dir.to_path_buf()),
        resume: true,
    };
    let result = train(&cell.spec, &data.set, &config, extractor, &options)?;
    write_json(&result_path, &result)?;
    Ok(result)
}

/// Trains one cell into `dir` with the cell's own seed; errors propagate.
pub fn run_single(
    cell: &GridCell,
    data: &LoadedDataset,
    extractor: &dyn FeatureExtractor,
    dir: &Path,
    resume: bool,
) -> Result<RunResult, ExperimentError> {
    run_one(cell, data, extractor, dir, cell.config.seed, resume)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

/// Trains one cell (all repeats) and summarises it; failures become a
/// `failed` row with an `error.txt` next to the run.
pub fn run_cell(
    cell: &GridCell,
    data: &LoadedDataset,
    extractor: &dyn FeatureExtractor,
    cells_dir: &Path,
    repeats: usize,
    resume: bool,
) -> ScoreRow {
    let cell_dir = cells_dir.join(cell.dir_name());
    let mut results = Vec::new();
    for (r, dir) in run_dirs(&cell_dir, repeats).into_iter().enumerate() {
        let seed = repeat_seed(cell.config.seed, r);
        let outcome = catch_unwind(AssertUnwindSafe(|| run_one(cell, data, extractor, &dir, seed, resume)))
            .unwrap_or_else(|p| Err(ExperimentError::Panic(panic_message(p))));
        match outcome {
            Ok(res) => results.push(res),
            Err(e) => {
                let msg = e.to_string();
                log::warn!("cell {} failed: {msg}", cell.dir_name());
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(dir.join(ERROR_FILE), format!("{msg}\n"));
                return ScoreRow::failed(&cell.model_id(), &cell.dataset_id, repeats, &msg);
            }
        }
    }
    ScoreRow::from_results(&cell.model_id(), &cell.dataset_id, &results)
}

/// Runs every cell on a pool of `workers` threads. Cells write to disjoint
/// directories under `out/cells`; the score table is written to
/// `out/score_table.csv` and returned.
pub fn run_grid(
    cells: &[GridCell],
    datasets: &[LoadedDataset],
    extractor: &dyn FeatureExtractor,
    out: &Path,
    options: &GridOptions,
) -> Result<ScoreTable, ExperimentError> {
    let by_id: BTreeMap<&str, &LoadedDataset> = datasets.iter().map(|d| (d.id.as_str(), d)).collect();
    for c in cells {
        if !by_id.contains_key(c.dataset_id.as_str()) {
            return Err(ExperimentError::Config(format!("no dataset `{}` loaded", c.dataset_id)));
        }
    }
    let cells_dir = out.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(|e| ExperimentError::io(&cells_dir, e))?;
    let repeats = options.repeats.max(1);
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::with_capacity(cells.len()));
    let workers = options.workers.clamp(1, cells.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                log::info!("cell {}/{}: {}", i + 1, cells.len(), cell.dir_name());
                let row = run_cell(cell, by_id[cell.dataset_id.as_str()], extractor, &cells_dir, repeats, options.resume);
                rows.lock().expect("rows lock").push(row);
            });
        }
    });
    let table = ScoreTable::new(rows.into_inner().expect("rows lock"));
    let path = out.join("score_table.csv");
    std::fs::write(&path, table.to_csv()).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(table)
}
