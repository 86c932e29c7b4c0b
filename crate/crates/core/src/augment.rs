//! Eightfold, label-preserving expansion of an affective dataset.
//!
//! Every source image yields seven variants: two 3×3 sharpening filters,
//! brightening by 1.2, darkening by 0.9 and the three right-angle rotations.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AffectiveDataset, AffectiveRecord, DataError};
use crate::imaging::{load_rgb, save_png, ImagingError};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("cannot augment a zero-sized image")]
    EmptyImage,
    #[error("{} unreadable image(s): {}", .0.len(), crate::data::display_paths(.0))]
    Unreadable(Vec<PathBuf>),
    #[error("two sources map to the same augmented file {}", .0.display())]
    NameCollision(PathBuf),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error at {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentationKind {
    Detail,
    EdgeEnhance,
    Brighten,
    Darken,
    Rotate90,
    Rotate180,
    Rotate270,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 7] = [
        AugmentationKind::Detail,
        AugmentationKind::EdgeEnhance,
        AugmentationKind::Brighten,
        AugmentationKind::Darken,
        AugmentationKind::Rotate90,
        AugmentationKind::Rotate180,
        AugmentationKind::Rotate270,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::Detail => "detail",
            AugmentationKind::EdgeEnhance => "edge_enhance",
            AugmentationKind::Brighten => "brighten",
            AugmentationKind::Darken => "darken",
            AugmentationKind::Rotate90 => "rotate90",
            AugmentationKind::Rotate180 => "rotate180",
            AugmentationKind::Rotate270 => "rotate270",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One transform with its fixed parameter (brightness factor for
/// `Brighten`/`Darken`, 1.0 otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationOp {
    kind: AugmentationKind,
    parameter: f64,
}

impl AugmentationOp {
    pub fn new(kind: AugmentationKind) -> Self {
        let parameter = match kind {
            AugmentationKind::Brighten => 1.2,
            AugmentationKind::Darken => 0.9,
            _ => 1.0,
        };
        Self { kind, parameter }
    }

    pub fn all() -> [AugmentationOp; 7] {
        AugmentationKind::ALL.map(AugmentationOp::new)
    }

    pub fn kind(&self) -> AugmentationKind {
        self.kind
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }
}

/// Integer 3×3 kernel with a divisor, applied with the border pixels copied
/// through unchanged.
struct Kernel {
    weights: [i32; 9],
    scale: i32,
}

/// `[0 -1 0; -1 10 -1; 0 -1 0] / 6`: centre 1.7, edge neighbours -0.2.
const DETAIL: Kernel = Kernel {
    weights: [0, -1, 0, -1, 10, -1, 0, -1, 0],
    scale: 6,
};

/// `[-1 -1 -1; -1 10 -1; -1 -1 -1] / 2`: centre 5.0, neighbours -0.5.
const EDGE_ENHANCE: Kernel = Kernel {
    weights: [-1, -1, -1, -1, 10, -1, -1, -1, -1],
    scale: 2,
};

fn convolve(img: &RgbImage, kernel: &Kernel) -> RgbImage {
    let (w, h) = img.dimensions();
    let mut out = img.clone();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = [0i32; 3];
            for ky in 0..3 {
                for kx in 0..3 {
                    let weight = kernel.weights[ky * 3 + kx];
                    if weight == 0 {
                        continue;
                    }
                    let px = img.get_pixel(x + kx as u32 - 1, y + ky as u32 - 1);
                    for c in 0..3 {
                        acc[c] += weight * px.0[c] as i32;
                    }
                }
            }
            let px = acc.map(|a| (a as f64 / kernel.scale as f64).round().clamp(0.0, 255.0) as u8);
            out.put_pixel(x, y, Rgb(px));
        }
    }
    out
}

fn scale_brightness(img: &RgbImage, factor: f64) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        for ch in px.0.iter_mut() {
            *ch = (*ch as f64 * factor).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Applies `op`. Rotations are counterclockwise pixel permutations.
pub fn augment_image(img: &RgbImage, op: &AugmentationOp) -> Result<RgbImage, AugmentError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(AugmentError::EmptyImage);
    }
    Ok(match op.kind {
        AugmentationKind::Detail => convolve(img, &DETAIL),
        AugmentationKind::EdgeEnhance => convolve(img, &EDGE_ENHANCE),
        AugmentationKind::Brighten | AugmentationKind::Darken => scale_brightness(img, op.parameter),
        AugmentationKind::Rotate90 => image::imageops::rotate270(img),
        AugmentationKind::Rotate180 => image::imageops::rotate180(img),
        AugmentationKind::Rotate270 => image::imageops::rotate90(img),
    })
}

/// `<out_dir>/<source>/<stem>__<opname>.png`
pub fn augmented_path(out_dir: &Path, record: &AffectiveRecord, kind: AugmentationKind) -> PathBuf {
    let stem = record
        .image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out_dir.join(&record.source).join(format!("{stem}__{}.png", kind.name()))
}

/// Writes seven variants of every record under `out_dir` and returns the
/// original records followed, per record, by their variants.
pub fn augment_dataset(ds: &AffectiveDataset, out_dir: &Path) -> Result<AffectiveDataset, AugmentError> {
    let mut records = Vec::with_capacity(ds.len() * 8);
    let mut unreadable = Vec::new();
    let mut outputs = HashSet::new();

    for record in ds.records() {
        records.push(record.clone());
        let img = match load_rgb(&record.image_path, None) {
            Ok(img) => img,
            Err(_) => {
                unreadable.push(record.image_path.clone());
                continue;
            }
        };
        for op in AugmentationOp::all() {
            let path = augmented_path(out_dir, record, op.kind);
            if !outputs.insert(path.clone()) {
                return Err(AugmentError::NameCollision(path));
            }
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|source| AugmentError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            save_png(&augment_image(&img, &op)?, &path)?;
            records.push(AffectiveRecord {
                image_path: path,
                augmentation: Some(op.kind.name().to_string()),
                ..record.clone()
            });
        }
    }
    if !unreadable.is_empty() {
        return Err(AugmentError::Unreadable(unreadable));
    }
    Ok(AffectiveDataset::new(records, ds.category_map().clone())?)
}
