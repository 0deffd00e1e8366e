//! On-disk demo bundle: `meta.json`, `depth/frame_%06d.f32`, `tracks.json`,
//! `hands.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

use super::camera::{CameraModel, Intrinsics};
use super::hand::NUM_LANDMARKS;
use super::ParseError;

/// Row-major depth image in meters. `0` marks an invalid reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthFrame {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width * height * 4 {
            return None;
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Some(Self {
            width,
            height,
            data,
        })
    }
}

/// 2D track of one annotated keypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointTrack {
    pub id: u32,
    pub label: String,
    pub group: u32,
    /// Owning object, 1-based.
    pub object: usize,
    /// Per-frame `[u, v]` pixels.
    pub uv: Vec<[f64; 2]>,
}

/// One hand detection: 21 landmarks of `[u, v, X, Y, Z]` (pixels, camera-frame meters).
pub type HandObservation = [[f64; 5]; NUM_LANDMARKS];

#[derive(Debug, Clone, PartialEq)]
pub struct DemoBundle {
    pub camera: CameraModel,
    pub fps: f64,
    pub depth: Vec<DepthFrame>,
    pub tracks: Vec<KeypointTrack>,
    /// Per arm, per frame; `None` where the hand was not detected.
    pub hands: [Vec<Option<HandObservation>>; 2],
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    fps: f64,
    camera: Intrinsics,
    extrinsics: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TracksFile {
    tracks: Vec<KeypointTrack>,
}

#[derive(Serialize, Deserialize)]
struct HandsFile {
    arms: Vec<Vec<Option<Vec<[f64; 5]>>>>,
}

fn io_err(path: &Path, source: std::io::Error) -> ParseError {
    ParseError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path, source: serde_json::Error) -> ParseError {
    ParseError::Json {
        path: path.display().to_string(),
        source,
    }
}

pub fn depth_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join("depth").join(format!("frame_{frame:06}.f32"))
}

impl DemoBundle {
    pub fn num_frames(&self) -> usize {
        self.hands[0].len()
    }

    /// Checks shape and value invariants of the bundle.
    pub fn validate(&self) -> Result<(), ParseError> {
        self.camera.validate()?;
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(ParseError::InvalidBundle(format!("fps must be positive, got {}", self.fps)));
        }
        let len = self.num_frames();
        if len < 2 {
            return Err(ParseError::InvalidBundle(format!("need at least 2 frames, got {len}")));
        }
        if self.hands[1].len() != len {
            return Err(ParseError::InvalidBundle(format!(
                "hand streams disagree on frame count: {} vs {}",
                len,
                self.hands[1].len()
            )));
        }
        if self.depth.len() != len {
            return Err(ParseError::InvalidBundle(format!(
                "{} depth frames for {} frames",
                self.depth.len(),
                len
            )));
        }
        for (t, d) in self.depth.iter().enumerate() {
            if d.width != self.camera.width || d.height != self.camera.height {
                return Err(ParseError::InvalidBundle(format!(
                    "depth frame {t} is {}x{}, camera is {}x{}",
                    d.width, d.height, self.camera.width, self.camera.height
                )));
            }
            if d.data.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(ParseError::InvalidBundle(format!("depth frame {t} has negative or NaN values")));
            }
        }
        for tr in &self.tracks {
            if tr.uv.len() != len {
                return Err(ParseError::InvalidBundle(format!(
                    "track {} has {} frames, expected {}",
                    tr.id,
                    tr.uv.len(),
                    len
                )));
            }
            if tr.object == 0 {
                return Err(ParseError::InvalidBundle(format!(
                    "track {} has object index 0; objects are 1-based",
                    tr.id
                )));
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ParseError> {
        let meta_path = dir.join("meta.json");
        let meta: MetaFile = serde_json::from_str(
            &fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?,
        )
        .map_err(|e| json_err(&meta_path, e))?;
        let ext: [f64; 16] = meta.extrinsics.as_slice().try_into().map_err(|_| {
            ParseError::InvalidBundle(format!(
                "{}: extrinsics must have 16 entries, found {}",
                meta_path.display(),
                meta.extrinsics.len()
            ))
        })?;
        let extrinsics = Pose::from_matrix4_row_major(&ext)
            .map_err(|e| ParseError::InvalidCamera(format!("extrinsics: {e}")))?;
        let camera = CameraModel::from_parts(meta.camera, extrinsics);
        camera.validate()?;

        let tracks_path = dir.join("tracks.json");
        let tracks: TracksFile = serde_json::from_str(
            &fs::read_to_string(&tracks_path).map_err(|e| io_err(&tracks_path, e))?,
        )
        .map_err(|e| json_err(&tracks_path, e))?;

        let hands_path = dir.join("hands.json");
        let hands_file: HandsFile = serde_json::from_str(
            &fs::read_to_string(&hands_path).map_err(|e| io_err(&hands_path, e))?,
        )
        .map_err(|e| json_err(&hands_path, e))?;
        if hands_file.arms.len() != 2 {
            return Err(ParseError::InvalidBundle(format!(
                "{}: expected 2 arms, found {}",
                hands_path.display(),
                hands_file.arms.len()
            )));
        }
        let mut hands: [Vec<Option<HandObservation>>; 2] = [Vec::new(), Vec::new()];
        for (arm, frames) in hands_file.arms.into_iter().enumerate() {
            for (t, f) in frames.into_iter().enumerate() {
                let obs = match f {
                    None => None,
                    Some(points) => Some(points.as_slice().try_into().map_err(|_| {
                        ParseError::InvalidBundle(format!(
                            "{}: arm {arm} frame {t} has {} landmarks, expected {NUM_LANDMARKS}",
                            hands_path.display(),
                            points.len()
                        ))
                    })?),
                };
                hands[arm].push(obs);
            }
        }

        let len = hands[0].len();
        let mut depth = Vec::with_capacity(len);
        for t in 0..len {
            let p = depth_path(dir, t);
            let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
            let frame = DepthFrame::from_le_bytes(camera.width, camera.height, &bytes).ok_or_else(|| {
                ParseError::InvalidBundle(format!(
                    "{}: {} bytes, expected {}",
                    p.display(),
                    bytes.len(),
                    camera.width * camera.height * 4
                ))
            })?;
            depth.push(frame);
        }
        let bundle = DemoBundle {
            camera,
            fps: meta.fps,
            depth,
            tracks: tracks.tracks,
            hands,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ParseError> {
        self.validate()?;
        fs::create_dir_all(dir.join("depth")).map_err(|e| io_err(dir, e))?;
        let meta = MetaFile {
            fps: self.fps,
            camera: self.camera.intrinsics(),
            extrinsics: self.camera.extrinsics.to_matrix4_row_major().to_vec(),
        };
        let write_json = |name: &str, text: String| -> Result<(), ParseError> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| io_err(&p, e))
        };
        write_json("meta.json", serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
        write_json(
            "tracks.json",
            serde_json::to_string(&TracksFile {
                tracks: self.tracks.clone(),
            })
            .expect("tracks serialize"),
        )?;
        let hands = HandsFile {
            arms: self
                .hands
                .iter()
                .map(|frames| frames.iter().map(|f| f.map(|o| o.to_vec())).collect())
                .collect(),
        };
        write_json("hands.json", serde_json::to_string(&hands).expect("hands serialize"))?;
        for (t, frame) in self.depth.iter().enumerate() {
            let p = depth_path(dir, t);
            fs::write(&p, frame.to_le_bytes()).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }
}
