use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ab_glyph::FontVec;

use super::grid::{read_json, ScoreRow, ScoreTable, ERROR_FILE, RESULT_FILE};
use super::plot::{bar_chart, line_chart, Series};
use super::ExperimentError;
use crate::training::RunResult;

pub const CURVE_HEADER: &str = "repeat,epoch,fid,kid,pagan_level";
pub const BAR_HEADER: &str = "model,best_fid";

/// Everything found for one grid cell on disk.
#[derive(Debug, Clone)]
pub struct CellRecord {
    pub dir_name: String,
    pub model_id: String,
    pub dataset: String,
    pub results: Vec<RunResult>,
    pub error: Option<String>,
    pub sample_grid: Option<PathBuf>,
}

impl CellRecord {
    pub fn row(&self) -> ScoreRow {
        match &self.error {
            Some(e) => ScoreRow::failed(&self.model_id, &self.dataset, self.results.len().max(1), e),
            None => ScoreRow::from_results(&self.model_id, &self.dataset, &self.results),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub table: ScoreTable,
    pub line_plots: Vec<PathBuf>,
    pub bar_charts: Vec<PathBuf>,
    pub sample_grids: Vec<PathBuf>,
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))? {
        let p = e.map_err(|e| ExperimentError::io(dir, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn latest_sample(run_dir: &Path) -> Option<PathBuf> {
    let mut grids: Vec<PathBuf> = std::fs::read_dir(run_dir.join("samples"))
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    grids.sort();
    grids.pop()
}

/// Reads `results_dir/cells/*`. A run directory with `result.json` counts as
/// done, one with `error.txt` as failed; anything else as incomplete.
pub fn collect_results(results_dir: &Path) -> Result<Vec<CellRecord>, ExperimentError> {
    let cells_dir = results_dir.join("cells");
    if !cells_dir.is_dir() {
        return Err(ExperimentError::NoResults(results_dir.to_path_buf()));
    }
    let mut records = Vec::new();
    for cell_dir in sorted_dirs(&cells_dir)? {
        let dir_name = cell_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let Some((model_id, dataset)) = dir_name.split_once("__") else {
            continue;
        };
        let reps: Vec<PathBuf> = sorted_dirs(&cell_dir)?
            .into_iter()
            .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("rep_")))
            .collect();
        let runs = if reps.is_empty() { vec![cell_dir.clone()] } else { reps };
        let mut results = Vec::new();
        let mut error = None;
        for run in &runs {
            if run.join(RESULT_FILE).is_file() {
                results.push(read_json::<RunResult>(&run.join(RESULT_FILE))?);
            } else if run.join(ERROR_FILE).is_file() {
                let text = std::fs::read_to_string(run.join(ERROR_FILE)).map_err(|e| ExperimentError::io(run, e))?;
                error = Some(text.trim().to_string());
            } else {
                error.get_or_insert_with(|| "incomplete run".to_string());
            }
        }
        records.push(CellRecord {
            model_id: model_id.to_string(),
            dataset: dataset.to_string(),
            sample_grid: latest_sample(&runs[0]),
            dir_name,
            results,
            error,
        });
    }
    if records.is_empty() {
        return Err(ExperimentError::NoResults(results_dir.to_path_buf()));
    }
    Ok(records)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

fn write_png(path: &Path, img: &image::RgbImage) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    crate::imaging::save_png(img, path)?;
    Ok(())
}

/// Per-cell FID curves, best-FID bars per dataset (ascending), the latest
/// sample grid of each cell, the score table and a markdown summary — all
/// derived from the run files, so regenerating is byte-identical.
pub fn write_report(results_dir: &Path, out_dir: &Path, font: Option<&FontVec>) -> Result<ReportSummary, ExperimentError> {
    let records = collect_results(results_dir)?;
    let table = ScoreTable::new(records.iter().map(CellRecord::row).collect());
    let mut summary = ReportSummary {
        table: table.clone(),
        ..Default::default()
    };
    write(&out_dir.join("score_table.csv"), table.to_csv().as_bytes())?;
    write(&out_dir.join("score_table.md"), table.to_markdown().as_bytes())?;

    for rec in records.iter().filter(|r| !r.results.is_empty()) {
        let mut csv = format!("{CURVE_HEADER}\n");
        let mut series = Vec::new();
        for (k, res) in rec.results.iter().enumerate() {
            for p in &res.trajectory {
                let _ = writeln!(csv, "{k},{},{},{},{}", p.epoch, p.fid, p.kid, p.pagan_level);
            }
            series.push(Series {
                name: format!("repeat {k}"),
                points: res.trajectory.iter().map(|p| (p.epoch as f64, p.fid)).collect(),
            });
        }
        let base = out_dir.join("fid_curves").join(&rec.dir_name);
        write(&base.with_extension("csv"), csv.as_bytes())?;
        let title = format!("{} on {}", rec.row().model_label(), rec.dataset);
        let png = base.with_extension("png");
        write_png(&png, &line_chart(&title, "epoch", "FID", &series, font))?;
        summary.line_plots.push(png);
    }

    let mut by_dataset: BTreeMap<&str, Vec<&ScoreRow>> = BTreeMap::new();
    for row in table.rows().iter().filter(|r| r.best_fid.is_finite()) {
        by_dataset.entry(&row.dataset).or_default().push(row);
    }
    for (dataset, mut rows) in by_dataset {
        rows.sort_by(|a, b| a.best_fid.total_cmp(&b.best_fid).then_with(|| a.model_id.cmp(&b.model_id)));
        let mut csv = format!("{BAR_HEADER}\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{}", r.model_id, r.best_fid);
        }
        let base = out_dir.join("best_fid").join(dataset);
        write(&base.with_extension("csv"), csv.as_bytes())?;
        let bars: Vec<(String, f64)> = rows.iter().map(|r| (r.model_label(), r.best_fid)).collect();
        let png = base.with_extension("png");
        write_png(&png, &bar_chart(&format!("Best FID on {dataset}"), "FID", &bars, font))?;
        summary.bar_charts.push(png);
    }

    for rec in &records {
        if let Some(src) = &rec.sample_grid {
            let bytes = std::fs::read(src).map_err(|e| ExperimentError::io(src, e))?;
            let dst = out_dir.join("samples").join(format!("{}.png", rec.dir_name));
            write(&dst, &bytes)?;
            summary.sample_grids.push(dst);
        }
    }

    let rel = |p: &PathBuf| p.strip_prefix(out_dir).unwrap_or(p).display().to_string();
    let mut md = String::from("# Experiment report\n\n## Best scores\n\n");
    md.push_str(&table.to_markdown());
    let _ = writeln!(md, "\n{} cell(s), {} failed.\n", table.len(), table.failed());
    for (heading, files) in [
        ("FID curves", &summary.line_plots),
        ("Best FID per dataset", &summary.bar_charts),
        ("Sample grids", &summary.sample_grids),
    ] {
        let _ = writeln!(md, "## {heading}\n");
        for f in files {
            let _ = writeln!(md, "- [{0}]({0})", rel(f));
        }
        md.push('\n');
    }
    write(&out_dir.join("summary.md"), md.as_bytes())?;
    Ok(summary)
}
