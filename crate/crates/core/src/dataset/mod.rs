//! Fixed-rate training shards with export-time keypoint perturbation.
//!
//! A shard is a flat run of little-endian `f32` records, one per frame:
//!
//! | field        | count  |
//! |--------------|--------|
//! | clean xyz    | `N×3`  |
//! | noisy xyz    | `N×3`  |
//! | observed     | `N`    |
//! | action       | 20     |
//! | prev action  | 20     |
//!
//! `observed` is 1 for a kept keypoint and 0 for a dropped one; dropped
//! keypoints have zeros in the noisy channel. The previous action of the
//! first frame of a demo is all zeros. Each demo occupies a contiguous run
//! of records inside one shard.

mod action;
mod stats;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{AugmentedDemo, Provenance};
use crate::trajectory::KeypointMeta;

pub use action::{decode_action, encode_action, ACTION_DIM};
pub use stats::{dataset_stats, DatasetStats, LengthBin};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid export options: {0}")]
    InvalidOptions(String),
    #[error("demos disagree on keypoints: {0}")]
    InconsistentDemos(String),
    #[error("corrupt shard {file} at byte {offset}: {reason}")]
    CorruptShard { file: String, offset: u64, reason: String },
    #[error("invalid manifest {path}: {reason}")]
    InvalidManifest { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn default_sigma() -> f64 {
    0.005
}

fn default_dropout() -> f64 {
    0.1
}

fn default_obs_window() -> usize {
    8
}

fn default_horizon() -> usize {
    16
}

fn default_demos_per_shard() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportOptions {
    /// Std-dev of the per-coordinate Gaussian noise, meters.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Probability that a keypoint is dropped in a frame.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Observation history length read by consumers, frames.
    #[serde(default = "default_obs_window")]
    pub obs_window: usize,
    /// Action chunk length read by consumers, frames.
    #[serde(default = "default_horizon")]
    pub action_horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_demos_per_shard")]
    pub demos_per_shard: usize,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            dropout: default_dropout(),
            obs_window: default_obs_window(),
            action_horizon: default_horizon(),
            seed: 0,
            demos_per_shard: default_demos_per_shard(),
        }
    }
}

impl ExportOptions {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidOptions(m));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be a finite value >= 0, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.obs_window == 0 || self.action_horizon == 0 {
            return bad(format!(
                "observation window and action horizon must be >= 1, got {} and {}",
                self.obs_window, self.action_horizon
            ));
        }
        if self.demos_per_shard == 0 {
            return bad("demos_per_shard must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoEntry {
    pub shard: usize,
    /// First record of the demo inside its shard.
    pub first_record: usize,
    pub len: usize,
    pub provenance: Provenance,
}

/// Hashes of the generation inputs, recorded for traceability.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub source_hash: String,
    pub spec_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub demo_count: usize,
    pub control_rate: f64,
    pub keypoints: Vec<KeypointMeta>,
    pub action_dim: usize,
    pub options: ExportOptions,
    pub source: SourceInfo,
    pub shards: Vec<ShardInfo>,
    pub demos: Vec<DemoEntry>,
}

impl DatasetManifest {
    pub fn num_keypoints(&self) -> usize {
        self.keypoints.len()
    }

    /// Floats per record.
    pub fn record_len(&self) -> usize {
        record_len(self.num_keypoints())
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.display().to_string(),
            source,
        })?;
        m.validate(&path)?;
        Ok(m)
    }

    fn validate(&self, path: &Path) -> Result<(), DatasetError> {
        let bad = |reason: String| DatasetError::InvalidManifest {
            path: path.display().to_string(),
            reason,
        };
        if self.format_version != FORMAT_VERSION {
            return Err(bad(format!("format version {} (expected {FORMAT_VERSION})", self.format_version)));
        }
        if self.action_dim != ACTION_DIM {
            return Err(bad(format!("action_dim {} (expected {ACTION_DIM})", self.action_dim)));
        }
        if self.demos.len() != self.demo_count {
            return Err(bad(format!("{} demo entries for demo_count {}", self.demos.len(), self.demo_count)));
        }
        let mut used = vec![0usize; self.shards.len()];
        for (i, d) in self.demos.iter().enumerate() {
            let Some(n) = used.get_mut(d.shard) else {
                return Err(bad(format!("demo {i} points at missing shard {}", d.shard)));
            };
            if d.first_record != *n {
                return Err(bad(format!("demo {i} starts at record {} (expected {n})", d.first_record)));
            }
            *n += d.len;
        }
        for (s, n) in self.shards.iter().zip(used) {
            if s.records != n {
                return Err(bad(format!("{} lists {} records, demos cover {n}", s.file, s.records)));
            }
        }
        Ok(())
    }
}

pub fn record_len(num_keypoints: usize) -> usize {
    7 * num_keypoints + 2 * ACTION_DIM
}

pub fn shard_name(index: usize) -> String {
    format!("shard_{index:04}.bin")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Noise stream of the `position`-th exported demo.
fn noise_rng(seed: u64, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(position as u64);
    rng
}

fn encode_demo(demo: &AugmentedDemo, position: usize, options: &ExportOptions, out: &mut Vec<u8>) {
    let traj = &demo.trajectory;
    let n = traj.num_keypoints();
    let mut rng = noise_rng(options.seed, position);
    let normal = Normal::new(0.0, options.sigma).expect("validated sigma");
    let mut prev = [0f32; ACTION_DIM];
    let put = |v: f32, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
    for t in 0..traj.len() {
        let state = traj.state(t);
        for p in state {
            for c in p.iter() {
                put(*c as f32, out);
            }
        }
        let mut observed = vec![1f32; n];
        for (i, p) in state.iter().enumerate() {
            // draw noise before dropout so the stream does not depend on it
            let noisy: [f64; 3] = std::array::from_fn(|c| {
                if options.sigma > 0.0 {
                    p[c] + normal.sample(&mut rng)
                } else {
                    p[c]
                }
            });
            let dropped = options.dropout > 0.0 && rng.gen::<f64>() < options.dropout;
            if dropped {
                observed[i] = 0.0;
            }
            for c in noisy {
                put(if dropped { 0.0 } else { c as f32 }, out);
            }
        }
        for m in observed {
            put(m, out);
        }
        let action = encode_action(&traj.actions[t]).map(|v| v as f32);
        for v in action {
            put(v, out);
        }
        for v in prev {
            put(v, out);
        }
        prev = action;
    }
}

/// Bytes of one shard holding `demos`, the first being the dataset's
/// `first_position`-th demo.
pub fn encode_shard(demos: &[AugmentedDemo], first_position: usize, options: &ExportOptions) -> Vec<u8> {
    let mut bytes = Vec::new();
    for (k, d) in demos.iter().enumerate() {
        encode_demo(d, first_position + k, options, &mut bytes);
    }
    bytes
}

/// Writes `demos` to `dir` as shards plus a manifest. Shards are written in
/// parallel; the bytes depend only on the inputs.
pub fn export_dataset(
    demos: &[AugmentedDemo],
    dir: &Path,
    options: &ExportOptions,
    source: SourceInfo,
) -> Result<DatasetManifest, DatasetError> {
    options.validate()?;
    let first = demos
        .first()
        .ok_or_else(|| DatasetError::InconsistentDemos("no demos to export".into()))?;
    let keypoints = first.trajectory.keypoints.clone();
    let dt = first.trajectory.dt;
    for (i, d) in demos.iter().enumerate() {
        if d.trajectory.keypoints != keypoints {
            return Err(DatasetError::InconsistentDemos(format!("demo {i} keypoint metadata differs from demo 0")));
        }
        if d.trajectory.dt != dt {
            return Err(DatasetError::InconsistentDemos(format!(
                "demo {i} has dt {} (demo 0 has {dt})",
                d.trajectory.dt
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let per = options.demos_per_shard;
    let shards: Vec<(ShardInfo, Vec<DemoEntry>)> = demos
        .par_chunks(per)
        .enumerate()
        .map(|(s, chunk)| -> Result<_, DatasetError> {
            let bytes = encode_shard(chunk, s * per, options);
            let mut entries = Vec::with_capacity(chunk.len());
            let mut records = 0;
            for d in chunk {
                entries.push(DemoEntry {
                    shard: s,
                    first_record: records,
                    len: d.trajectory.len(),
                    provenance: d.provenance.clone(),
                });
                records += d.trajectory.len();
            }
            let file = shard_name(s);
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
            Ok((
                ShardInfo {
                    file,
                    records,
                    sha256: sha256_hex(&bytes),
                },
                entries,
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        demo_count: demos.len(),
        control_rate: 1.0 / dt,
        keypoints,
        action_dim: ACTION_DIM,
        options: *options,
        source,
        shards: Vec::with_capacity(shards.len()),
        demos: Vec::with_capacity(demos.len()),
    };
    for (info, entries) in shards {
        manifest.shards.push(info);
        manifest.demos.extend(entries);
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// One demo read back from its shard.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoRecords {
    /// `L × N` clean keypoints.
    pub clean: Vec<[f32; 3]>,
    pub noisy: Vec<[f32; 3]>,
    pub observed: Vec<f32>,
    pub actions: Vec<[f32; ACTION_DIM]>,
    pub prev_actions: Vec<[f32; ACTION_DIM]>,
}

impl DemoRecords {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Frame indices of the observation window ending at `t` and of the
    /// action chunk starting at `t`, clamped to the demo.
    pub fn window(&self, t: usize, obs_window: usize, horizon: usize) -> (Vec<usize>, Vec<usize>) {
        let last = self.len().saturating_sub(1);
        let obs = (0..obs_window).map(|k| (t + k + 1).saturating_sub(obs_window).min(last)).collect();
        let act = (0..horizon).map(|k| (t + k).min(last)).collect();
        (obs, act)
    }
}

#[derive(Debug, Clone)]
pub struct ImportedDataset {
    pub manifest: DatasetManifest,
    pub demos: Vec<DemoRecords>,
}

fn read_shard(dir: &Path, info: &ShardInfo, record_len: usize) -> Result<Vec<f32>, DatasetError> {
    let path: PathBuf = dir.join(&info.file);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let corrupt = |offset: u64, reason: String| DatasetError::CorruptShard {
        file: path.display().to_string(),
        offset,
        reason,
    };
    let rec_bytes = record_len * 4;
    let expected = info.records * rec_bytes;
    if bytes.len() != expected {
        let offset = (bytes.len().min(expected) / rec_bytes * rec_bytes) as u64;
        return Err(corrupt(offset, format!("{} bytes, expected {expected}", bytes.len())));
    }
    let hash = sha256_hex(&bytes);
    if hash != info.sha256 {
        return Err(corrupt(0, format!("sha256 {hash} does not match manifest {}", info.sha256)));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    if let Some(i) = floats.iter().position(|v| !v.is_finite()) {
        return Err(corrupt((i * 4) as u64, "non-finite value".into()));
    }
    Ok(floats)
}

/// Reads a dataset written by [`export_dataset`], checking sizes and hashes.
pub fn import_dataset(dir: &Path) -> Result<ImportedDataset, DatasetError> {
    let manifest = DatasetManifest::load(dir)?;
    let n = manifest.num_keypoints();
    let rl = manifest.record_len();
    let shards: Vec<Vec<f32>> = manifest
        .shards
        .par_iter()
        .map(|s| read_shard(dir, s, rl))
        .collect::<Result<_, _>>()?;
    let demos = manifest
        .demos
        .iter()
        .map(|d| {
            let data = &shards[d.shard];
            let mut rec = DemoRecords {
                clean: Vec::with_capacity(d.len * n),
                noisy: Vec::with_capacity(d.len * n),
                observed: Vec::with_capacity(d.len * n),
                actions: Vec::with_capacity(d.len),
                prev_actions: Vec::with_capacity(d.len),
            };
            for r in d.first_record..d.first_record + d.len {
                let x = &data[r * rl..(r + 1) * rl];
                let triple = |i: usize| [x[i], x[i + 1], x[i + 2]];
                rec.clean.extend((0..n).map(|i| triple(3 * i)));
                rec.noisy.extend((0..n).map(|i| triple(3 * n + 3 * i)));
                rec.observed.extend_from_slice(&x[6 * n..7 * n]);
                let a = 7 * n;
                rec.actions.push(x[a..a + ACTION_DIM].try_into().expect("action slice"));
                rec.prev_actions
                    .push(x[a + ACTION_DIM..a + 2 * ACTION_DIM].try_into().expect("prev action slice"));
            }
            rec
        })
        .collect();
    Ok(ImportedDataset { manifest, demos })
}
