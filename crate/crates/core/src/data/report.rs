//! Histogram reports of a built dataset: quadrant counts per source and
//! category counts, as CSV and as markdown tables laid out like the usual
//! corpus summary tables.

use std::fmt::Write as _;

use super::AffectiveDataset;

pub const QUADRANT_HEADER: &str = "dataset,quarter_i,quarter_ii,quarter_iii,quarter_iv,total";
pub const CATEGORY_HEADER: &str = "category,count";
/// Categories per row pair in the markdown category table.
const CATEGORY_COLUMNS: usize = 7;

/// One row per source (sorted) plus an `ALL` row.
pub fn quadrant_rows(ds: &AffectiveDataset) -> Vec<(String, [usize; 4])> {
    let mut rows: Vec<_> = ds.quadrant_counts_by_source().into_iter().collect();
    rows.push(("ALL".to_string(), ds.quadrant_counts()));
    rows
}

pub fn quadrant_csv(ds: &AffectiveDataset) -> String {
    let mut out = format!("{QUADRANT_HEADER}\n");
    for (name, c) in quadrant_rows(ds) {
        let total: usize = c.iter().sum();
        let _ = writeln!(out, "{name},{},{},{},{},{total}", c[0], c[1], c[2], c[3]);
    }
    out
}

pub fn quadrant_markdown(ds: &AffectiveDataset) -> String {
    let mut out = String::from("| Dataset | Quarter I | Quarter II | Quarter III | Quarter IV |\n|---|---:|---:|---:|---:|\n");
    for (name, c) in quadrant_rows(ds) {
        let name = if name == "ALL" { "**ALL**".to_string() } else { name };
        let _ = writeln!(out, "| {name} | {} | {} | {} | {} |", c[0], c[1], c[2], c[3]);
    }
    out
}

pub fn category_csv(ds: &AffectiveDataset) -> String {
    let mut out = format!("{CATEGORY_HEADER}\n");
    for (name, n) in ds.category_counts() {
        let _ = writeln!(out, "{name},{n}");
    }
    out
}

/// Alternating `Category` / `Amount` rows, seven categories wide.
pub fn category_markdown(ds: &AffectiveDataset) -> String {
    let counts: Vec<(String, usize)> = ds.category_counts().into_iter().collect();
    let mut out = String::new();
    for (i, chunk) in counts.chunks(CATEGORY_COLUMNS).enumerate() {
        let pad = CATEGORY_COLUMNS - chunk.len();
        let names: Vec<&str> = chunk.iter().map(|c| c.0.as_str()).chain(std::iter::repeat_n("", pad)).collect();
        let amounts: Vec<String> = chunk.iter().map(|c| c.1.to_string()).chain(std::iter::repeat_n(String::new(), pad)).collect();
        let _ = writeln!(out, "| **Category** | {} |", names.join(" | "));
        if i == 0 {
            let _ = writeln!(out, "|---|{}", "---:|".repeat(CATEGORY_COLUMNS));
        }
        let _ = writeln!(out, "| **Amount** | {} |", amounts.join(" | "));
    }
    out
}

/// Both tables with headings, as written by `dataset build`.
pub fn dataset_report_markdown(ds: &AffectiveDataset) -> String {
    format!(
        "# Dataset report\n\n{} images.\n\n## Images per quarter\n\n{}\n## Images per category\n\n{}",
        ds.len(),
        quadrant_markdown(ds),
        category_markdown(ds)
    )
}
