//! Loading and validating command inputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use bimaug_core::augment::{
    AugmentOptions, AugmentationSource, AugmentationSpec, ExternalProcessPlanner, LinearPlanner, MotionPlanner,
    SampleFailure,
};
use bimaug_core::dataset::{sha256_hex, ExportOptions};
use bimaug_core::grounding::GroundingConfig;
use bimaug_core::{ObjectConfiguration, Plane, StateActionTrajectory, TaskTemplate, Vec3};

use crate::{PlannerArgs, SourceArgs};

/// Name of the generation record written next to the manifest.
pub const GENERATION_FILE: &str = "generation.json";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// `nx,ny,nz,offset`.
pub fn parse_plane(s: &str) -> Result<Plane> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("--mirror-plane '{s}': expected nx,ny,nz,offset"))?;
    if v.len() != 4 {
        bail!("--mirror-plane '{s}': expected 4 numbers, got {}", v.len());
    }
    Plane::new(Vec3::new(v[0], v[1], v[2]), v[3]).with_context(|| format!("--mirror-plane '{s}'"))
}

pub fn load_trajectory(path: &Path) -> Result<StateActionTrajectory> {
    StateActionTrajectory::load(path).with_context(|| format!("cannot load trajectory {}", path.display()))
}

pub fn load_template(path: &Path) -> Result<TaskTemplate> {
    let t = TaskTemplate::load(path).with_context(|| format!("cannot load template {}", path.display()))?;
    t.ensure_valid().with_context(|| format!("template {}", path.display()))?;
    Ok(t)
}

pub fn load_objects(path: Option<&Path>, traj: &StateActionTrajectory, template: &TaskTemplate) -> Result<ObjectConfiguration> {
    let config = match path {
        Some(p) => ObjectConfiguration::load(p, traj).with_context(|| format!("cannot load objects {}", p.display()))?,
        None => ObjectConfiguration::from_keypoints(traj, template.num_objects)?,
    };
    config.check_against(template.num_objects, traj.num_keypoints())?;
    Ok(config)
}

pub fn thresholds(args: &SourceArgs) -> Result<GroundingConfig> {
    let mut g = match &args.grounding {
        Some(p) => read_json::<GroundingConfig>(p)?,
        None => GroundingConfig::default(),
    };
    if let Some(e) = args.eps_skill {
        g.eps_skill = e;
    }
    if let Some(e) = args.eps_sync {
        g.eps_sync = e;
    }
    if !(g.eps_skill > 0.0 && g.eps_sync > 0.0) {
        bail!("thresholds must be positive (eps_skill={}, eps_sync={})", g.eps_skill, g.eps_sync);
    }
    Ok(g)
}

/// Trajectory, template and object frames as read from disk.
pub struct Inputs {
    pub trajectory: StateActionTrajectory,
    pub template: TaskTemplate,
    pub config: ObjectConfiguration,
}

impl Inputs {
    pub fn load(traj: &Path, template: &Path, objects: Option<&Path>) -> Result<Self> {
        let trajectory = load_trajectory(traj)?;
        let template = load_template(template)?;
        let config = load_objects(objects, &trajectory, &template)?;
        Ok(Self {
            trajectory,
            template,
            config,
        })
    }

    /// Fingerprint of everything generation reads besides the spec.
    pub fn hash(&self, thresholds: &GroundingConfig) -> String {
        let rest = serde_json::to_string(&(&self.template, &self.config.frames, thresholds)).expect("inputs serialize");
        sha256_hex(format!("{}\n{rest}", self.trajectory.to_json()).as_bytes())
    }

    pub fn source(self, thresholds: &GroundingConfig, plane: Plane) -> Result<AugmentationSource> {
        AugmentationSource::new(self.trajectory, self.template, self.config, thresholds, plane)
            .context("cannot ground the demonstration")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRecord {
    pub program: PathBuf,
    pub args: Vec<String>,
}

pub fn planner_record(args: &PlannerArgs) -> Result<Option<PlannerRecord>> {
    match &args.planner {
        None if !args.planner_args.is_empty() => bail!("--planner-arg needs --planner"),
        None => Ok(None),
        Some(p) => Ok(Some(PlannerRecord {
            program: p.clone(),
            args: args.planner_args.clone(),
        })),
    }
}

pub fn make_planner(record: Option<&PlannerRecord>) -> Box<dyn MotionPlanner> {
    match record {
        None => Box::new(LinearPlanner),
        Some(r) => Box::new(ExternalProcessPlanner {
            program: r.program.clone(),
            args: r.args.clone(),
        }),
    }
}

/// Everything needed to regenerate a dataset from its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub spec: AugmentationSpec,
    pub thresholds: GroundingConfig,
    pub options: AugmentOptions,
    pub export: ExportOptions,
    pub planner: Option<PlannerRecord>,
    pub source_hash: String,
    pub failures: Vec<SampleFailure>,
}
