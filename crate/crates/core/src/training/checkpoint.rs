//! Single-file checkpoints: magic, version, SHA-256 of the body, then a JSON
//! header and a little-endian `f32` tensor payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Adam, AdamState, EvalPoint, GanPair, TrainConfig, TrainError};
use crate::models::{build_discriminator, build_generator, ModelSpec, TensorData};

const MAGIC: &[u8; 8] = b"AFGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<i64>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    config: TrainConfig,
    epoch: usize,
    global_step: u64,
    pagan_level: usize,
    trajectory: Vec<EvalPoint>,
    opt_g: AdamState,
    opt_d: AdamState,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub epoch: usize,
    pub global_step: u64,
    pub pagan_level: usize,
    pub trajectory: Vec<EvalPoint>,
    tensors: BTreeMap<String, TensorData>,
    opt_g: AdamState,
    opt_d: AdamState,
}

const GROUPS: [&str; 4] = ["g/param/", "g/buffer/", "d/param/", "d/buffer/"];

fn with_prefix<'a>(prefix: &str, map: BTreeMap<String, TensorData>) -> impl Iterator<Item = (String, TensorData)> + 'a {
    let prefix = prefix.to_string();
    map.into_iter().map(move |(k, v)| (format!("{prefix}{k}"), v))
}

fn take_prefix(prefix: &str, map: &BTreeMap<String, TensorData>) -> BTreeMap<String, TensorData> {
    map.iter()
        .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
        .collect()
}

impl Checkpoint {
    pub fn capture(
        pair: &GanPair,
        config: &TrainConfig,
        epoch: usize,
        global_step: u64,
        trajectory: &[EvalPoint],
    ) -> Self {
        let g = pair.generator.store();
        let d = pair.discriminator.store();
        let mut tensors = BTreeMap::new();
        tensors.extend(with_prefix(GROUPS[0], g.export_params()));
        tensors.extend(with_prefix(GROUPS[1], g.export_buffers()));
        tensors.extend(with_prefix(GROUPS[2], d.export_params()));
        tensors.extend(with_prefix(GROUPS[3], d.export_buffers()));
        let mut opt_g = pair.opt_g.state();
        let mut opt_d = pair.opt_d.state();
        for (tag, state) in [("opt_g", &mut opt_g), ("opt_d", &mut opt_d)] {
            for (name, (m, v)) in std::mem::take(&mut state.moments) {
                tensors.insert(format!("{tag}/m/{name}"), m);
                tensors.insert(format!("{tag}/v/{name}"), v);
            }
        }
        Self {
            spec: pair.spec().clone(),
            config: config.clone(),
            epoch,
            global_step,
            pagan_level: pair.discriminator.pagan_level(),
            trajectory: trajectory.to_vec(),
            tensors,
            opt_g,
            opt_d,
        }
    }

    /// Rebuilds the models and optimizers.
    pub fn restore(&self) -> Result<GanPair, TrainError> {
        // Same construction seeds as a fresh run, so later PAGAN growth
        // draws the same new weights.
        let (g_seed, d_seed) = GanPair::model_seeds(&self.config);
        let mut generator = build_generator(&self.spec, g_seed)?;
        let mut discriminator = build_discriminator(&self.spec, self.pagan_level, d_seed)?;
        generator
            .store_mut()
            .import(&take_prefix(GROUPS[0], &self.tensors), &take_prefix(GROUPS[1], &self.tensors))?;
        discriminator
            .store_mut()
            .import(&take_prefix(GROUPS[2], &self.tensors), &take_prefix(GROUPS[3], &self.tensors))?;
        let optimizer = |tag: &str, state: &AdamState| {
            let m = take_prefix(&format!("{tag}/m/"), &self.tensors);
            let v = take_prefix(&format!("{tag}/v/"), &self.tensors);
            let mut state = state.clone();
            state.moments = m
                .into_iter()
                .filter_map(|(k, m)| v.get(&k).map(|v| (k, (m, v.clone()))))
                .collect();
            Adam::from_state(&state)
        };
        Ok(GanPair {
            generator,
            discriminator,
            opt_g: optimizer("opt_g", &self.opt_g),
            opt_d: optimizer("opt_d", &self.opt_d),
        })
    }

    /// Named tensors of one group (`"g/param/"`, `"d/buffer/"`, …).
    pub fn tensors(&self, prefix: &str) -> BTreeMap<String, TensorData> {
        take_prefix(prefix, &self.tensors)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut payload = Vec::new();
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset: payload.len(),
                len: t.values.len(),
            });
            for v in &t.values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            spec: self.spec.clone(),
            config: self.config.clone(),
            epoch: self.epoch,
            global_step: self.global_step,
            pagan_level: self.pagan_level,
            trajectory: self.trajectory.clone(),
            opt_g: self.opt_g.clone(),
            opt_d: self.opt_d.clone(),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let mut body = Vec::with_capacity(8 + header.len() + payload.len());
        body.extend_from_slice(&(header.len() as u64).to_le_bytes());
        body.extend_from_slice(&header);
        body.extend_from_slice(&payload);

        let mut file = Vec::with_capacity(44 + body.len());
        file.extend_from_slice(MAGIC);
        file.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        file.extend_from_slice(&Sha256::digest(&body));
        file.extend_from_slice(&body);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        }
        // Write-then-rename so a crash never leaves a half-written checkpoint.
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, &file).map_err(|e| TrainError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| TrainError::io(path, e))
    }

    /// Reads and verifies a checkpoint. With `expected` set, a checkpoint
    /// for a different model spec is rejected.
    pub fn load(path: &Path, expected: Option<&ModelSpec>) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
        let integrity = |msg: &str| TrainError::Integrity {
            path: path.to_path_buf(),
            reason: msg.to_string(),
        };
        if bytes.len() < 44 + 8 || &bytes[..8] != MAGIC {
            return Err(integrity("not a checkpoint file or truncated header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(integrity(&format!("unsupported version {version}")));
        }
        let body = &bytes[44..];
        if Sha256::digest(body).as_slice() != &bytes[12..44] {
            return Err(integrity("checksum mismatch (corrupt or truncated)"));
        }
        let header_len = u64::from_le_bytes(body[..8].try_into().expect("8 bytes")) as usize;
        let header_end = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| integrity("header length out of range"))?;
        let header: Header =
            serde_json::from_slice(&body[8..header_end]).map_err(|e| integrity(&format!("bad header: {e}")))?;
        if let Some(spec) = expected {
            if spec != &header.spec {
                return Err(TrainError::SpecMismatch {
                    expected: Box::new(spec.clone()),
                    found: Box::new(header.spec),
                });
            }
        }
        let payload = &body[header_end..];
        let mut tensors = BTreeMap::new();
        for e in &header.tensors {
            let end = e.offset + 4 * e.len;
            if end > payload.len() || e.shape.iter().product::<i64>() as usize != e.len {
                return Err(integrity(&format!("tensor `{}` out of bounds", e.name)));
            }
            let values = payload[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(
                e.name.clone(),
                TensorData {
                    shape: e.shape.clone(),
                    values,
                },
            );
        }
        Ok(Self {
            spec: header.spec,
            config: header.config,
            epoch: header.epoch,
            global_step: header.global_step,
            pagan_level: header.pagan_level,
            trajectory: header.trajectory,
            tensors,
            opt_g: header.opt_g,
            opt_d: header.opt_d,
        })
    }
}

/// `checkpoints/epoch_0005.ckpt`
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Latest `epoch_XXXX.ckpt` in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<(usize, std::path::PathBuf)>, TrainError> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best = None;
    for entry in std::fs::read_dir(dir).map_err(|e| TrainError::io(dir, e))? {
        let path = entry.map_err(|e| TrainError::io(dir, e))?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("epoch_"))
            .and_then(|n| n.strip_suffix(".ckpt"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(epoch) = epoch {
            if best.as_ref().is_none_or(|(b, _)| epoch > *b) {
                best = Some((epoch, path));
            }
        }
    }
    Ok(best)
}
