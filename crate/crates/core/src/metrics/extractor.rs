use std::path::{Path, PathBuf};
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use tch::{CModule, IValue, Kind, Tensor};

use super::MetricsError;
use crate::imaging::ImageBatch;
use crate::rng::stream;

pub const STUB_DIM: usize = 64;
pub const STUB_CLASSES: usize = 10;
const STUB_SIDE: usize = 8;
const STUB_INPUT: usize = 3 * STUB_SIDE * STUB_SIDE;

/// Maps image batches to an `n × d` feature matrix.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn feature_dim(&self) -> usize;

    fn features(&self, images: &ImageBatch) -> Result<DMatrix<f64>, MetricsError>;

    /// `n × K` class probabilities for the Inception Score, when the
    /// extractor has a classification head.
    fn class_probabilities(&self, _images: &ImageBatch) -> Result<Option<DMatrix<f64>>, MetricsError> {
        Ok(None)
    }
}

/// Runs `extractor`, rejecting empty batches and checking the output shape.
pub fn extract_features(images: &ImageBatch, extractor: &dyn FeatureExtractor) -> Result<DMatrix<f64>, MetricsError> {
    if images.is_empty() {
        return Err(MetricsError::TooFewSamples { need: 1, got: 0 });
    }
    let f = extractor.features(images)?;
    if f.nrows() != images.len() || f.ncols() != extractor.feature_dim() {
        return Err(MetricsError::Extractor {
            name: extractor.name().into(),
            message: format!(
                "returned {}x{} for {} images (expected d = {})",
                f.nrows(),
                f.ncols(),
                images.len(),
                extractor.feature_dim()
            ),
        });
    }
    Ok(f)
}

/// Asset-free extractor: bilinear downsample to 8×8 (half-pixel centres),
/// flatten the 192 RGB values and apply a fixed seeded Gaussian projection
/// to 64 dimensions. A second fixed projection to 10 logits plus softmax
/// stands in for a classifier head.
#[derive(Debug, Clone)]
pub struct StubExtractor {
    projection: DMatrix<f64>,
    classifier: DMatrix<f64>,
}

impl Default for StubExtractor {
    fn default() -> Self {
        Self::new(0)
    }
}

impl StubExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = stream(seed, "stub-extractor", 0);
        let mut gaussian = |r: usize, c: usize| {
            let scale = 1.0 / (r as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
        };
        let projection = gaussian(STUB_INPUT, STUB_DIM);
        let classifier = gaussian(STUB_DIM, STUB_CLASSES);
        Self { projection, classifier }
    }

    fn downsampled(&self, images: &ImageBatch) -> DMatrix<f64> {
        let (c, h, w) = (images.channels(), images.height(), images.width());
        let taps = |out: usize, len: usize| -> Vec<(usize, usize, f64)> {
            let scale = len as f64 / out as f64;
            (0..out)
                .map(|o| {
                    let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                    let i0 = (src.floor() as usize).min(len - 1);
                    let i1 = (i0 + 1).min(len - 1);
                    (i0, i1, src - i0 as f64)
                })
                .collect()
        };
        let ys = taps(STUB_SIDE, h);
        let xs = taps(STUB_SIDE, w);
        DMatrix::from_fn(images.len(), STUB_INPUT, |n, k| {
            let ch = (k / (STUB_SIDE * STUB_SIDE)).min(c - 1);
            let (oy, ox) = ((k / STUB_SIDE) % STUB_SIDE, k % STUB_SIDE);
            let plane = &images.image(n)[ch * h * w..(ch + 1) * h * w];
            let px = |y: usize, x: usize| plane[y * w + x] as f64;
            let (y0, y1, ly) = ys[oy];
            let (x0, x1, lx) = xs[ox];
            let top = px(y0, x0) * (1.0 - lx) + px(y0, x1) * lx;
            let bottom = px(y1, x0) * (1.0 - lx) + px(y1, x1) * lx;
            top * (1.0 - ly) + bottom * ly
        })
    }
}

impl FeatureExtractor for StubExtractor {
    fn name(&self) -> &str {
        "stub"
    }

    fn feature_dim(&self) -> usize {
        STUB_DIM
    }

    fn features(&self, images: &ImageBatch) -> Result<DMatrix<f64>, MetricsError> {
        if images.height() == 0 || images.width() == 0 || images.channels() == 0 {
            return Err(MetricsError::Extractor {
                name: "stub".into(),
                message: "zero-sized images".into(),
            });
        }
        Ok(self.downsampled(images) * &self.projection)
    }

    fn class_probabilities(&self, images: &ImageBatch) -> Result<Option<DMatrix<f64>>, MetricsError> {
        Ok(Some(softmax_rows(self.features(images)? * &self.classifier)))
    }
}

fn softmax_rows(mut logits: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// Feature network loaded from a TorchScript file. `forward` receives
/// `(n, 3, input_size, input_size)` floats in `[-1, 1]` and returns either
/// the `(n, d)` features or a `(features, logits)` tuple.
pub struct TorchScriptExtractor {
    name: String,
    module: Mutex<CModule>,
    input_size: usize,
    feature_dim: usize,
}

const CHUNK: usize = 50;

impl std::fmt::Debug for TorchScriptExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorchScriptExtractor")
            .field("name", &self.name)
            .field("input_size", &self.input_size)
            .field("feature_dim", &self.feature_dim)
            .finish()
    }
}

impl TorchScriptExtractor {
    /// Loads the module and checks with a probe batch that it produces
    /// `feature_dim` features.
    pub fn load(path: &Path, input_size: usize, feature_dim: usize) -> Result<Self, MetricsError> {
        let name = path.display().to_string();
        let err = |message: String| MetricsError::Extractor {
            name: name.clone(),
            message,
        };
        let mut module = CModule::load(path).map_err(|e| err(format!("cannot load: {e}")))?;
        module.set_eval();
        let extractor = Self {
            name: name.clone(),
            module: Mutex::new(module),
            input_size,
            feature_dim,
        };
        let probe = Tensor::zeros([2, 3, input_size as i64, input_size as i64], (Kind::Float, tch::Device::Cpu));
        let (features, _) = extractor.run(&probe)?;
        if features.size() != [2, feature_dim as i64] {
            return Err(err(format!(
                "probe produced {:?}, expected [2, {feature_dim}]",
                features.size()
            )));
        }
        Ok(extractor)
    }

    pub fn path_name(&self) -> PathBuf {
        PathBuf::from(&self.name)
    }

    fn run(&self, input: &Tensor) -> Result<(Tensor, Option<Tensor>), MetricsError> {
        let err = |message: String| MetricsError::Extractor {
            name: self.name.clone(),
            message,
        };
        let module = self.module.lock().map_err(|_| err("module lock poisoned".into()))?;
        let out = tch::no_grad(|| module.forward_is(&[IValue::Tensor(input.shallow_clone())]))
            .map_err(|e| err(format!("forward failed: {e}")))?;
        match out {
            IValue::Tensor(t) => Ok((t, None)),
            IValue::Tuple(mut items) if items.len() == 2 => {
                let logits = items.pop();
                let features = items.pop();
                match (features, logits) {
                    (Some(IValue::Tensor(f)), Some(IValue::Tensor(l))) => Ok((f, Some(l))),
                    _ => Err(err("tuple output must hold two tensors".into())),
                }
            }
            other => Err(err(format!("unsupported output {other:?}"))),
        }
    }

    fn prepare(&self, images: &ImageBatch) -> Tensor {
        let mut t = images.to_tensor();
        if images.channels() > 3 {
            t = t.narrow(1, 0, 3);
        } else if images.channels() < 3 {
            t = t.narrow(1, 0, 1).repeat([1, 3, 1, 1]);
        }
        let s = self.input_size as i64;
        if images.height() as i64 != s || images.width() as i64 != s {
            t = t.upsample_bilinear2d([s, s], false, None, None);
        }
        t
    }

    fn run_chunks(&self, images: &ImageBatch, want_logits: bool) -> Result<Option<DMatrix<f64>>, MetricsError> {
        let mut rows: Vec<f64> = Vec::new();
        let mut cols = 0;
        let indices: Vec<usize> = (0..images.len()).collect();
        for chunk in indices.chunks(CHUNK) {
            let (features, logits) = self.run(&self.prepare(&images.select(chunk)))?;
            let t = if want_logits {
                match logits {
                    Some(l) => l.softmax(1, Kind::Double),
                    None => return Ok(None),
                }
            } else {
                features.to_kind(Kind::Double)
            };
            let t = t.contiguous();
            cols = t.size().last().copied().unwrap_or(0) as usize;
            let mut buf = vec![0f64; t.numel()];
            t.copy_data(&mut buf, t.numel());
            rows.extend(buf);
        }
        Ok(Some(DMatrix::from_row_slice(images.len(), cols, &rows)))
    }
}

impl FeatureExtractor for TorchScriptExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn features(&self, images: &ImageBatch) -> Result<DMatrix<f64>, MetricsError> {
        Ok(self.run_chunks(images, false)?.expect("features are always produced"))
    }

    fn class_probabilities(&self, images: &ImageBatch) -> Result<Option<DMatrix<f64>>, MetricsError> {
        self.run_chunks(images, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::inception_score;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, size: usize, seed: u64) -> ImageBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
        ImageBatch::new(n, 3, size, size, data).unwrap()
    }

    #[test]
    fn stub_shape_and_determinism() {
        let stub = StubExtractor::default();
        let batch = random_batch(7, 64, 0);
        let a = extract_features(&batch, &stub).unwrap();
        assert_eq!(a.shape(), (7, STUB_DIM));
        assert_eq!(a, extract_features(&batch, &StubExtractor::default()).unwrap());
        assert_ne!(a, extract_features(&batch, &StubExtractor::new(1)).unwrap());
        let empty = ImageBatch::new(0, 3, 64, 64, vec![]).unwrap();
        assert!(extract_features(&empty, &stub).is_err());
    }

    #[test]
    fn stub_downsample_matches_half_pixel_bilinear() {
        // A 16-pixel ramp along x: each output column averages two inputs.
        let size = 16;
        let data: Vec<f32> = (0..3 * size * size).map(|i| (i % size) as f32).collect();
        let batch = ImageBatch::new(1, 3, size, size, data).unwrap();
        let down = StubExtractor::default().downsampled(&batch);
        for ox in 0..STUB_SIDE {
            assert!((down[(0, ox)] - (2 * ox) as f64 - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn stub_probabilities_are_rows_of_a_simplex() {
        let stub = StubExtractor::default();
        let probs = stub.class_probabilities(&random_batch(20, 32, 3)).unwrap().unwrap();
        assert_eq!(probs.shape(), (20, STUB_CLASSES));
        let is = inception_score(&probs).unwrap();
        assert!((1.0..=STUB_CLASSES as f64).contains(&is));
    }

    #[test]
    fn missing_torchscript_file() {
        assert!(TorchScriptExtractor::load(Path::new("/nonexistent/x.pt"), 32, 8).is_err());
    }
}
