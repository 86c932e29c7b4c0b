//! Synthetic stand-ins for the licensed affective image sets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CategoryMap, DataError, SECTOR_WIDTH_DEG};

pub const SYNTHETIC_SOURCE: &str = "synthetic";

#[derive(Debug, Clone)]
pub struct FixtureOptions {
    pub image_size: u32,
    pub manifest_name: String,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            image_size: 64,
            manifest_name: "manifest.csv".into(),
        }
    }
}

fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_u8 = |ch: f64| ((ch + m).clamp(0.0, 1.0) * 255.0).round() as u8;
    [to_u8(r), to_u8(g), to_u8(b)]
}

/// Raw rating on the synthetic `[1, 9]` scale, rounded to 3 decimals so it
/// survives a CSV round trip unchanged.
fn to_raw(x: f64) -> f64 {
    ((5.0 + 4.0 * x.clamp(-1.0, 1.0)) * 1000.0).round() / 1000.0
}

fn write_manifest(path: &Path, rows: &[(String, f64, f64)]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    writer.write_record(super::MANIFEST_HEADER).map_err(csv_err)?;
    for (name, v, a) in rows {
        writer
            .write_record([name.as_str(), SYNTHETIC_SOURCE, &v.to_string(), &a.to_string()])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| DataError::io(path, e))
}

fn save(img: &RgbImage, path: &Path) -> Result<(), DataError> {
    img.save(path).map_err(|source| DataError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `n` colour-field images and a manifest; returns the manifest path.
///
/// Hue runs from blue (low valence) to yellow (high valence); the amplitude
/// of the gradient-and-stripe pattern grows with arousal.
pub fn synth_fixture(n: usize, seed: u64, out_dir: &Path, opts: &FixtureOptions) -> Result<PathBuf, DataError> {
    if n == 0 || opts.image_size == 0 {
        return Err(DataError::EmptyFixture);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = opts.image_size;
    let span = (size.max(2) - 1) as f64;
    let mut rows = Vec::with_capacity(n);

    for i in 0..n {
        let valence_raw = to_raw(rng.random_range(-1.0..=1.0));
        let arousal_raw = to_raw(rng.random_range(-1.0..=1.0));
        let valence = (valence_raw - 5.0) / 4.0;
        let arousal = (arousal_raw - 5.0) / 4.0;
        let hue = 240.0 - 90.0 * (valence + 1.0) + rng.random_range(-12.0..12.0);
        let amplitude = 0.1 + 0.2 * (arousal + 1.0);
        let theta: f64 = rng.random_range(0.0..2.0 * PI);
        let freq = rng.random_range(1..=3) as f64;
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let (ct, st) = (theta.cos(), theta.sin());

        let img = RgbImage::from_fn(size, size, |x, y| {
            let u = x as f64 / span - 0.5;
            let w = y as f64 / span - 0.5;
            let g = u * ct + w * st;
            let stripe = (2.0 * PI * freq * g + phase).sin();
            let value = 0.55 + amplitude * (0.8 * g + 0.5 * stripe);
            Rgb(hsv_to_rgb(hue, 0.65, value.clamp(0.0, 1.0)))
        });
        let name = format!("fx_{i:05}.png");
        save(&img, &out_dir.join(&name))?;
        rows.push((name, valence_raw, arousal_raw));
    }

    let manifest = out_dir.join(&opts.manifest_name);
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}

/// Writes `per_class` images for each of the map's thirteen classes, with
/// ratings placed well inside the class region and a distinct flat colour per
/// class (plus mild noise), so the classes are linearly separable in pixel
/// space. Returns the manifest path.
pub fn synth_category_fixture(
    per_class: usize,
    seed: u64,
    out_dir: &Path,
    map: &CategoryMap,
    opts: &FixtureOptions,
) -> Result<PathBuf, DataError> {
    if per_class == 0 || opts.image_size == 0 {
        return Err(DataError::EmptyFixture);
    }
    map.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = map.num_classes();
    let mut rows = Vec::with_capacity(per_class * classes);

    for class in 0..classes {
        let hue = 360.0 * class as f64 / classes as f64;
        let value: f64 = if class % 2 == 0 { 0.9 } else { 0.5 };
        for i in 0..per_class {
            let (v, a) = if class == classes - 1 {
                let r = rng.random_range(0.0..0.4) * map.neutral_radius;
                let t: f64 = rng.random_range(0.0..2.0 * PI);
                (r * t.cos(), r * t.sin())
            } else {
                let r = rng.random_range(map.neutral_radius + 0.15..0.9);
                let jitter = rng.random_range(-0.3..0.3) * SECTOR_WIDTH_DEG;
                let t = (map.sector_offset_deg + SECTOR_WIDTH_DEG * (class as f64 + 0.5) + jitter).to_radians();
                (r * t.cos(), r * t.sin())
            };
            let img = RgbImage::from_fn(opts.image_size, opts.image_size, |_, _| {
                let noise = rng.random_range(-0.04..0.04);
                Rgb(hsv_to_rgb(hue, 0.8, (value + noise).clamp(0.0, 1.0)))
            });
            let name = format!("cls{class:02}_{i:04}.png");
            save(&img, &out_dir.join(&name))?;
            rows.push((name, to_raw(v), to_raw(a)));
        }
    }

    let manifest = out_dir.join(&opts.manifest_name);
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}
