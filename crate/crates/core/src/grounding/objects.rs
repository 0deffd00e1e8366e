//! Initial object frames and keypoint ownership.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::parse::{robust_median, CameraModel, DepthFrame, MAD_CUTOFF};
use crate::trajectory::{KeypointMeta, StateActionTrajectory};

use super::GroundingError;

/// Masks with fewer valid-depth pixels than this still work but are logged.
pub const MIN_MASK_PIXELS: usize = 10;

/// Binary per-pixel object mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl ObjectMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Reads an 8-bit PNG; any nonzero first channel counts as inside.
    pub fn load_png(path: &Path) -> Result<Self, GroundingError> {
        let io = |source| GroundingError::Io {
            path: path.display().to_string(),
            source,
        };
        let bad = |msg: String| GroundingError::InvalidMask {
            path: path.display().to_string(),
            reason: msg,
        };
        let decoder = png::Decoder::new(File::open(path).map_err(io)?);
        let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(bad(format!("expected 8-bit samples, got {:?}", info.bit_depth)));
        }
        let channels = info.color_type.samples();
        let (width, height) = (info.width as usize, info.height as usize);
        let data = (0..width * height)
            .map(|i| {
                let row = i / width;
                let col = i % width;
                buf[row * info.line_size + col * channels] != 0
            })
            .collect();
        Ok(Self { width, height, data })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), GroundingError> {
        let io = |source| GroundingError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = self.data.iter().map(|b| if *b { 255 } else { 0 }).collect();
        enc.write_header()
            .and_then(|mut w| w.write_image_data(&bytes))
            .map_err(|e| GroundingError::InvalidMask {
                path: path.display().to_string(),
                reason: e.to_string(),
            })
    }
}

/// Initial object frames 𝒪 plus which keypoints belong to which object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfiguration {
    pub frames: Vec<Pose>,
    /// `ownership[k]`: keypoint indices of object `k + 1`.
    pub ownership: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct ConfigFile {
    objects: Vec<Pose>,
}

impl ObjectConfiguration {
    pub fn num_objects(&self) -> usize {
        self.frames.len()
    }

    /// Frame of 1-based object `k`.
    pub fn frame(&self, k: usize) -> &Pose {
        &self.frames[k - 1]
    }

    /// Ownership sets from per-keypoint object indices.
    pub fn ownership_from_meta(meta: &[KeypointMeta], num_objects: usize) -> Vec<Vec<usize>> {
        let mut own = vec![Vec::new(); num_objects];
        for (i, m) in meta.iter().enumerate() {
            if (1..=num_objects).contains(&m.object) {
                own[m.object - 1].push(i);
            }
        }
        own
    }

    /// Axis-aligned frames at the first-frame centroid of each object's keypoints.
    pub fn from_keypoints(traj: &StateActionTrajectory, num_objects: usize) -> Result<Self, GroundingError> {
        let ownership = Self::ownership_from_meta(&traj.keypoints, num_objects);
        let s0 = traj.state(0);
        let frames = ownership
            .iter()
            .enumerate()
            .map(|(k, idx)| {
                if idx.is_empty() {
                    return Err(GroundingError::EmptyMask { object: k + 1 });
                }
                let c = idx.iter().map(|&i| s0[i]).sum::<Vec3>() / idx.len() as f64;
                Ok(Pose::from_translation(c))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { frames, ownership })
    }

    /// `config.json` with `{"objects": [pose, ...]}`; ownership from the trajectory.
    pub fn load(path: &Path, traj: &StateActionTrajectory) -> Result<Self, GroundingError> {
        let text = std::fs::read_to_string(path).map_err(|source| GroundingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ConfigFile = serde_json::from_str(&text).map_err(|source| GroundingError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let ownership = Self::ownership_from_meta(&traj.keypoints, file.objects.len());
        Ok(Self {
            frames: file.objects,
            ownership,
        })
    }

    pub fn check_against(&self, num_objects: usize, num_keypoints: usize) -> Result<(), GroundingError> {
        if self.frames.len() != num_objects || self.ownership.len() != num_objects {
            return Err(GroundingError::ObjectCount {
                template: num_objects,
                config: self.frames.len(),
            });
        }
        let mut seen = vec![false; num_keypoints];
        for &i in self.ownership.iter().flatten() {
            if i >= num_keypoints || seen[i] {
                return Err(GroundingError::Ownership(format!("keypoint {i} out of range or owned twice")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Object frames at the depth-robust centroid of each mask on frame 0.
pub fn object_frames_from_masks(
    masks: &[ObjectMask],
    depth: &DepthFrame,
    camera: &CameraModel,
    keypoints: &[KeypointMeta],
) -> Result<ObjectConfiguration, GroundingError> {
    let mut frames = Vec::with_capacity(masks.len());
    for (k, mask) in masks.iter().enumerate() {
        if mask.width != depth.width || mask.height != depth.height {
            return Err(GroundingError::InvalidMask {
                path: format!("object {}", k + 1),
                reason: format!(
                    "mask is {}x{}, depth is {}x{}",
                    mask.width, mask.height, depth.width, depth.height
                ),
            });
        }
        let mut pixels = Vec::new();
        for row in 0..mask.height {
            for col in 0..mask.width {
                let d = depth.get(col, row) as f64;
                if mask.get(col, row) && d.is_finite() && d > 0.0 {
                    pixels.push((col as f64, row as f64, d));
                }
            }
        }
        let depths: Vec<f64> = pixels.iter().map(|p| p.2).collect();
        let Some(med) = robust_median(&depths) else {
            return Err(GroundingError::EmptyMask { object: k + 1 });
        };
        if pixels.len() < MIN_MASK_PIXELS {
            log::warn!("object {}: only {} valid mask pixels", k + 1, pixels.len());
        }
        let mut dev: Vec<f64> = depths.iter().map(|d| (d - med).abs()).collect();
        dev.sort_by(|a, b| a.total_cmp(b));
        let mad = dev[dev.len() / 2];
        let kept: Vec<Vec3> = pixels
            .iter()
            .filter(|p| (p.2 - med).abs() <= MAD_CUTOFF * mad)
            .map(|&(u, v, d)| camera.unproject(u, v, d))
            .collect();
        let centroid = kept.iter().sum::<Vec3>() / kept.len() as f64;
        frames.push(Pose::from_translation(camera.extrinsics.apply(&centroid)));
    }
    let ownership = ObjectConfiguration::ownership_from_meta(keypoints, masks.len());
    Ok(ObjectConfiguration { frames, ownership })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraModel {
        CameraModel {
            fx: 100.0,
            fy: 100.0,
            cx: 20.0,
            cy: 15.0,
            width: 40,
            height: 30,
            extrinsics: Pose::identity(),
        }
    }

    #[test]
    fn principal_point_cluster() {
        let cam = camera();
        let depth = DepthFrame::filled(40, 30, 1.0);
        let mut m = ObjectMask::empty(40, 30);
        m.set(20, 15, true);
        let c = object_frames_from_masks(&[m.clone()], &depth, &cam, &[]).unwrap();
        assert_eq!(c.frames[0].translation, Vec3::new(0.0, 0.0, 1.0));

        let shifted = CameraModel {
            extrinsics: Pose::from_translation(Vec3::new(0.5, 0.0, 0.0)),
            ..cam
        };
        let c = object_frames_from_masks(&[m], &depth, &shifted, &[]).unwrap();
        assert_eq!(c.frames[0].translation, Vec3::new(0.5, 0.0, 1.0));
        assert_eq!(c.frames[0].rotation, Pose::identity().rotation);
    }

    #[test]
    fn depth_outliers_do_not_move_centroid() {
        let cam = camera();
        let mut depth = DepthFrame::filled(40, 30, 0.5);
        let mut m = ObjectMask::empty(40, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pix = Vec::new();
        for row in 10..20 {
            for col in 15..25 {
                m.set(col, row, true);
                pix.push((col, row));
            }
        }
        let clean = object_frames_from_masks(&[m.clone()], &depth, &cam, &[]).unwrap();
        for _ in 0..10 {
            let (col, row) = pix[rng.gen_range(0..pix.len())];
            depth.set(col, row, 10.0);
        }
        let noisy = object_frames_from_masks(&[m], &depth, &cam, &[]).unwrap();
        let shift = (noisy.frames[0].translation - clean.frames[0].translation).norm();
        assert!(shift < 5e-3, "centroid moved {shift}");
    }

    #[test]
    fn empty_mask_is_an_error() {
        let depth = DepthFrame::filled(40, 30, 1.0);
        let err = object_frames_from_masks(&[ObjectMask::empty(40, 30)], &depth, &camera(), &[]).unwrap_err();
        assert!(matches!(err, GroundingError::EmptyMask { object: 1 }));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("object_1.png");
        let mut m = ObjectMask::empty(7, 5);
        m.set(3, 2, true);
        m.set(6, 4, true);
        m.save_png(&path).unwrap();
        assert_eq!(ObjectMask::load_png(&path).unwrap(), m);
    }
}
