//! Image batches in network layout and conversions to/from files.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{Rgb, RgbImage};
use tch::{Kind, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("failed to read image {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("failed to write image {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("batch shape mismatch: {0}")]
    Shape(String),
}

/// `n` images stored NCHW as `f32` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    n: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageBatch {
    pub fn new(n: usize, channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, ImagingError> {
        if data.len() != n * channels * height * width {
            return Err(ImagingError::Shape(format!(
                "{} values for {n}x{channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            n,
            channels,
            height,
            width,
            data,
        })
    }

    /// Copies a `(n, c, h, w)` tensor off the autograd graph.
    pub fn from_tensor(t: &Tensor) -> Result<Self, ImagingError> {
        let size = t.size();
        if size.len() != 4 {
            return Err(ImagingError::Shape(format!("expected a 4-d tensor, got {size:?}")));
        }
        let t = t.detach().to_kind(Kind::Float).contiguous();
        let numel = t.numel();
        let mut data = vec![0f32; numel];
        t.copy_data(&mut data, numel);
        let [n, c, h, w] = [size[0], size[1], size[2], size[3]].map(|d| d as usize);
        Self::new(n, c, h, w, data)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.data).view([
            self.n as i64,
            self.channels as i64,
            self.height as i64,
            self.width as i64,
        ])
    }

    /// Stacks 8-bit RGB images (all the same size) into a batch.
    pub fn from_rgb(images: &[RgbImage]) -> Result<Self, ImagingError> {
        let Some(first) = images.first() else {
            return Self::new(0, 3, 0, 0, Vec::new());
        };
        let (w, h) = first.dimensions();
        let mut data = Vec::with_capacity(images.len() * 3 * (w * h) as usize);
        for img in images {
            if img.dimensions() != (w, h) {
                return Err(ImagingError::Shape("images differ in size".into()));
            }
            data.extend(rgb_to_chw(img));
        }
        Self::new(images.len(), 3, h as usize, w as usize, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let stride = self.channels * self.height * self.width;
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.channels * self.height * self.width);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Self {
            n: indices.len(),
            data,
            ..*self
        }
    }

    /// 8-bit RGB rendering of image `i` (first three channels).
    pub fn to_rgb(&self, i: usize) -> RgbImage {
        let plane = self.height * self.width;
        let img = self.image(i);
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let off = y as usize * self.width + x as usize;
            let px = |c: usize| {
                let v = img[c.min(self.channels - 1) * plane + off];
                (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
            };
            Rgb([px(0), px(1), px(2)])
        })
    }
}

/// HWC 8-bit pixels to CHW floats in `[-1, 1]`.
pub fn rgb_to_chw(img: &RgbImage) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let plane = (w * h) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px.0[c] as f32 / 127.5 - 1.0;
        }
    }
    out
}

/// Loads any supported image as RGB, resizing (triangle filter) to `size`×`size`
/// when needed.
pub fn load_rgb(path: &Path, size: Option<u32>) -> Result<RgbImage, ImagingError> {
    let img = image::open(path)
        .map_err(|source| ImagingError::Read {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Ok(match size {
        Some(s) if img.dimensions() != (s, s) => image::imageops::resize(&img, s, s, FilterType::Triangle),
        _ => img,
    })
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), ImagingError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| ImagingError::Write {
            path: path.to_path_buf(),
            source,
        })
}

/// Tiles the first `rows * cols` images of `batch` into one picture with a
/// one-pixel separator.
pub fn image_grid(batch: &ImageBatch, rows: usize, cols: usize) -> RgbImage {
    let (h, w) = (batch.height() as u32, batch.width() as u32);
    let gw = cols as u32 * (w + 1) + 1;
    let gh = rows as u32 * (h + 1) + 1;
    let mut grid = RgbImage::from_pixel(gw, gh, Rgb([0, 0, 0]));
    for i in 0..(rows * cols).min(batch.len()) {
        let tile = batch.to_rgb(i);
        let (r, c) = ((i / cols) as u32, (i % cols) as u32);
        image::imageops::replace(&mut grid, &tile, (1 + c * (w + 1)) as i64, (1 + r * (h + 1)) as i64);
    }
    grid
}
