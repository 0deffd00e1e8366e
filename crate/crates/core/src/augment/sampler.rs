//! Augmentation spec and rejection sampling of new object configurations.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Plane, Pose, Vec3};
use crate::grounding::{ObjectConfiguration, TaskTemplate};
use crate::trajectory::NUM_ARMS;
use crate::workspace::{ArmReach, BoxAndSphereReach, WorkspaceBox};

use super::AugmentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSampler {
    /// Per-axis `[lo, hi]` translation offset, meters.
    pub translation_range: [[f64; 2]; 3],
    /// `[lo, hi]` rotation about the vertical through the object center, radians.
    pub yaw_range: [f64; 2],
}

impl ObjectSampler {
    pub fn fixed() -> Self {
        Self {
            translation_range: [[0.0; 2]; 3],
            yaw_range: [0.0; 2],
        }
    }
}

fn default_velocity() -> f64 {
    0.25
}

fn default_dt() -> f64 {
    0.1
}

fn default_count() -> usize {
    1
}

fn default_retries() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub workspace: WorkspaceBox,
    pub arms: [ArmReach; NUM_ARMS],
    pub symmetry_plane: Plane,
    pub object_samplers: Vec<ObjectSampler>,
    #[serde(default)]
    pub min_separation: f64,
    #[serde(default = "default_velocity")]
    pub velocity: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

impl AugmentationSpec {
    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let text = std::fs::read_to_string(path).map_err(|source| AugmentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| AugmentError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self, num_objects: usize) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidSpec(m));
        if !(self.velocity > 0.0 && self.velocity.is_finite()) {
            return bad(format!("velocity must be positive, got {}", self.velocity));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return bad(format!("min_separation must be ≥ 0, got {}", self.min_separation));
        }
        if !self.workspace.is_well_formed() || !self.workspace.min.iter().chain(&self.workspace.max).all(|v| v.is_finite()) {
            return bad("workspace box must be finite with min ≤ max".into());
        }
        if self.arms.iter().any(|a| !(a.reach > 0.0) || !a.base.iter().all(|v| v.is_finite())) {
            return bad("arm reach must be positive with a finite base".into());
        }
        if self.object_samplers.len() != num_objects {
            return bad(format!(
                "{} object samplers for {num_objects} objects",
                self.object_samplers.len()
            ));
        }
        for (k, s) in self.object_samplers.iter().enumerate() {
            let ranges = s.translation_range.iter().chain(std::iter::once(&s.yaw_range));
            for r in ranges {
                if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                    return bad(format!("object {}: range {:?} must be finite with lo ≤ hi", k + 1, r));
                }
            }
        }
        Ok(())
    }

    pub fn reachability(&self) -> BoxAndSphereReach {
        BoxAndSphereReach {
            workspace: Some(self.workspace),
            arms: Some(self.arms),
        }
    }
}

/// Deterministic generator for augmentation `index`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A sampled configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationSample {
    /// New object frames 𝒪̃.
    pub objects: Vec<Pose>,
    /// World-frame motion `𝒪̃_k · 𝒪_k⁻¹` of each object.
    pub deltas: Vec<Pose>,
    /// Only the arm-swapped assignment reaches every object.
    pub use_mirror: bool,
    pub attempts: usize,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.gen::<f64>()
}

fn reachable_by(spec: &AugmentationSpec, template: &TaskTemplate, objects: &[Pose], swap: bool) -> bool {
    objects.iter().enumerate().all(|(k, f)| match template.assigned_arm(k + 1) {
        Some(j) => spec.arms[if swap { 1 - j } else { j }].reaches(&f.translation),
        None => true,
    })
}

/// Draws translation + yaw offsets until the configuration is inside the
/// workspace, well separated and reachable by the assigned (or mirrored) arms.
pub fn sample_configuration(
    spec: &AugmentationSpec,
    source: &ObjectConfiguration,
    template: &TaskTemplate,
    rng: &mut ChaCha8Rng,
) -> Result<ConfigurationSample, AugmentError> {
    let k = source.num_objects();
    spec.validate(k)?;
    if k >= 2 && spec.min_separation > spec.workspace.diagonal() {
        return Err(AugmentError::UnsatisfiableSpec {
            attempts: 0,
            reason: format!(
                "min separation {} exceeds the workspace diagonal {:.3}",
                spec.min_separation,
                spec.workspace.diagonal()
            ),
        });
    }
    let mut last_reason = String::new();
    for attempt in 1..=spec.max_retries.max(1) {
        let deltas: Vec<Pose> = spec
            .object_samplers
            .iter()
            .zip(&source.frames)
            .map(|(s, f)| {
                let shift = Vec3::new(
                    uniform(rng, s.translation_range[0]),
                    uniform(rng, s.translation_range[1]),
                    uniform(rng, s.translation_range[2]),
                );
                let yaw = uniform(rng, s.yaw_range);
                Pose::from_translation(shift).compose(&Pose::yaw_about(&f.translation, yaw))
            })
            .collect();
        let objects: Vec<Pose> = deltas.iter().zip(&source.frames).map(|(d, f)| d.compose(f)).collect();
        if let Some(k) = objects.iter().position(|o| !spec.workspace.contains(&o.translation)) {
            last_reason = format!("object {} outside the workspace", k + 1);
            continue;
        }
        let separated = (0..k).all(|a| {
            (a + 1..k).all(|b| (objects[a].translation - objects[b].translation).norm() >= spec.min_separation)
        });
        if !separated {
            last_reason = "objects closer than min_separation".into();
            continue;
        }
        let use_mirror = if reachable_by(spec, template, &objects, false) {
            false
        } else if reachable_by(spec, template, &objects, true) {
            true
        } else {
            last_reason = "an object is out of reach of either arm assignment".into();
            continue;
        };
        return Ok(ConfigurationSample {
            objects,
            deltas,
            use_mirror,
            attempts: attempt,
        });
    }
    Err(AugmentError::UnsatisfiableSpec {
        attempts: spec.max_retries.max(1),
        reason: last_reason,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_object_spec() -> AugmentationSpec {
        AugmentationSpec {
            workspace: WorkspaceBox {
                min: [-0.8, -0.2, -0.05],
                max: [0.8, 0.9, 0.6],
            },
            arms: [
                ArmReach {
                    base: [-0.35, -0.15, 0.0],
                    reach: 0.8,
                },
                ArmReach {
                    base: [0.35, -0.15, 0.0],
                    reach: 0.8,
                },
            ],
            symmetry_plane: Plane::yz(),
            object_samplers: vec![ObjectSampler::fixed(), ObjectSampler::fixed()],
            min_separation: 0.1,
            velocity: 0.25,
            dt: 0.1,
            seed: 3,
            count: 10,
            max_retries: 1000,
        }
    }

    pub(crate) fn pour_template() -> TaskTemplate {
        serde_json::from_str(
            r#"{"num_objects": 2, "stages": [
                {"sync": false, "actions": [
                    {"arm": 0, "contact": ["ee0", 1], "ref": 1},
                    {"arm": 1, "contact": ["ee1", 2], "ref": 2}]},
                {"sync": true, "actions": [{"arm": null, "contact": [1, 2], "ref": 2}]}]}"#,
        )
        .unwrap()
    }

    fn source() -> ObjectConfiguration {
        ObjectConfiguration {
            frames: vec![
                Pose::from_translation(Vec3::new(-0.25, 0.35, 0.0)),
                Pose::from_translation(Vec3::new(0.25, 0.35, 0.0)),
            ],
            ownership: vec![vec![0], vec![1]],
        }
    }

    #[test]
    fn zero_width_ranges_give_identity() {
        let spec = two_object_spec();
        let s = sample_configuration(&spec, &source(), &pour_template(), &mut rng_for(1, 0)).unwrap();
        assert!(s.deltas.iter().all(|d| *d == Pose::identity()));
        assert!(!s.use_mirror);
        assert_eq!(s.objects, source().frames);
    }

    #[test]
    fn far_side_forces_mirror() {
        let mut spec = two_object_spec();
        spec.arms[0].reach = 0.55;
        spec.arms[1].reach = 0.55;
        // object 1 pushed to arm 1's side, object 2 to arm 0's side
        spec.object_samplers[0].translation_range[0] = [0.5, 0.55];
        spec.object_samplers[1].translation_range[0] = [-0.55, -0.5];
        for i in 0..20 {
            let s = sample_configuration(&spec, &source(), &pour_template(), &mut rng_for(9, i)).unwrap();
            assert!(s.use_mirror);
        }
    }

    #[test]
    fn impossible_separation() {
        let mut spec = two_object_spec();
        spec.min_separation = 10.0;
        let r = sample_configuration(&spec, &source(), &pour_template(), &mut rng_for(1, 0));
        assert!(matches!(r, Err(AugmentError::UnsatisfiableSpec { .. })));
    }

    #[test]
    fn samples_stay_in_workspace_and_are_reproducible() {
        let mut spec = two_object_spec();
        spec.object_samplers[0].translation_range = [[-0.2, 0.2], [-0.1, 0.2], [0.0, 0.0]];
        spec.object_samplers[0].yaw_range = [-1.0, 1.0];
        spec.object_samplers[1].translation_range = [[-0.2, 0.2], [-0.1, 0.2], [0.0, 0.0]];
        for i in 0..100 {
            let a = sample_configuration(&spec, &source(), &pour_template(), &mut rng_for(5, i)).unwrap();
            let b = sample_configuration(&spec, &source(), &pour_template(), &mut rng_for(5, i)).unwrap();
            assert_eq!(a, b);
            assert!(a.objects.iter().all(|o| spec.workspace.contains(&o.translation)));
            assert!((a.objects[0].translation - a.objects[1].translation).norm() >= spec.min_separation);
            // the yaw is about the object's own center: it only adds the sampled shift
            let shift = a.objects[0].translation - source().frames[0].translation;
            assert!(shift.x.abs() <= 0.2 && shift.z == 0.0);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = two_object_spec();
        let back: AugmentationSpec = serde_json::from_str(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        let minimal = r#"{"workspace": {"min": [0,0,0], "max": [1,1,1]},
            "arms": [{"base": [0,0,0], "reach": 1}, {"base": [1,0,0], "reach": 1}],
            "symmetry_plane": {"normal": [1,0,0], "offset": 0.5},
            "object_samplers": [{"translation_range": [[0,0],[0,0],[0,0]], "yaw_range": [0,0]}]}"#;
        let s: AugmentationSpec = serde_json::from_str(minimal).unwrap();
        assert_eq!((s.velocity, s.dt, s.count, s.max_retries), (0.25, 0.1, 1, 1000));
    }
}
