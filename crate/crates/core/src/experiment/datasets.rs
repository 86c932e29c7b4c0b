use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{DatasetEntry, ExperimentError};
use crate::data::{build_dataset, AffectiveDataset, DataConfig};
use crate::imaging::load_rgb;
use crate::training::TrainingSet;

/// A dataset cell decoded at the grid's image size.
pub struct LoadedDataset {
    pub id: String,
    pub set: TrainingSet,
    /// Git-style content hash recorded in run manifests.
    pub content_hash: String,
}

fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))? {
        out.push(entry.map_err(|e| ExperimentError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Images of `dir` with labels: one class per sub-directory (sorted by
/// name), or a single class when the images sit directly in `dir`.
pub fn scan_image_dir(dir: &Path) -> Result<(Vec<(PathBuf, usize)>, usize), ExperimentError> {
    let entries = sorted_entries(dir)?;
    let class_dirs: Vec<&PathBuf> = entries.iter().filter(|p| p.is_dir()).collect();
    let mut files = Vec::new();
    if class_dirs.is_empty() {
        files.extend(entries.iter().filter(|p| is_image(p)).map(|p| (p.clone(), 0)));
        return Ok((files, 1));
    }
    for (class, sub) in class_dirs.iter().enumerate() {
        for p in sorted_entries(sub)? {
            if is_image(&p) {
                files.push((p, class));
            }
        }
    }
    Ok((files, class_dirs.len()))
}

fn image_dir_hash(dir: &Path, files: &[(PathBuf, usize)]) -> Result<String, ExperimentError> {
    let mut listing = String::new();
    for (p, class) in files {
        let bytes = std::fs::read(p).map_err(|e| ExperimentError::io(p, e))?;
        let rel = p.strip_prefix(dir).unwrap_or(p);
        listing.push_str(&format!("{}\t{class}\t{}\n", rel.display(), git_blob_hash(&bytes)));
    }
    Ok(git_blob_hash(listing.as_bytes()))
}

/// Reads the affective dataset an entry points at (`csv` or `manifests`).
pub fn affective_dataset(entry: &DatasetEntry, data: &DataConfig) -> Result<Option<AffectiveDataset>, ExperimentError> {
    if let Some(csv) = &entry.csv {
        return Ok(Some(AffectiveDataset::read_csv(csv, &data.category_map)?));
    }
    if !entry.manifests.is_empty() {
        return Ok(Some(build_dataset(&entry.manifests, data)?));
    }
    Ok(None)
}

pub fn load_dataset(entry: &DatasetEntry, data: &DataConfig, image_size: usize) -> Result<LoadedDataset, ExperimentError> {
    entry.validate()?;
    let wrap = |e: ExperimentError| ExperimentError::Dataset {
        id: entry.id.clone(),
        message: e.to_string(),
    };
    if let Some(ds) = affective_dataset(entry, data).map_err(wrap)? {
        let set = TrainingSet::from_dataset(&ds, image_size).map_err(|e| wrap(e.into()))?;
        let content_hash = ds.content_hash().map_err(|e| wrap(e.into()))?;
        return Ok(LoadedDataset {
            id: entry.id.clone(),
            set,
            content_hash,
        });
    }
    let dir = entry.image_dir.as_deref().expect("validated entry");
    let (files, classes) = scan_image_dir(dir).map_err(wrap)?;
    if files.is_empty() {
        return Err(wrap(ExperimentError::Config(format!("no images under {}", dir.display()))));
    }
    let mut images = Vec::with_capacity(files.len());
    for (p, _) in &files {
        images.push(load_rgb(p, Some(image_size as u32)).map_err(|e| wrap(e.into()))?);
    }
    let labels = files.iter().map(|(_, c)| *c as i64).collect();
    let set = TrainingSet::from_images(&images, labels, classes).map_err(|e| wrap(e.into()))?;
    Ok(LoadedDataset {
        id: entry.id.clone(),
        set,
        content_hash: image_dir_hash(dir, &files).map_err(wrap)?,
    })
}
