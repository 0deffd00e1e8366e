//! Summary statistics of an exported dataset.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trajectory::NUM_ARMS;
use crate::workspace::WorkspaceBox;

use super::{ImportedDataset, ACTION_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    /// Inclusive frame-count range.
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub demo_count: usize,
    pub total_frames: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub length_histogram: Vec<LengthBin>,
    /// Bounding box of the sampled object positions, per object.
    pub placement_boxes: Vec<WorkspaceBox>,
    pub mirrored: usize,
    /// Gripper transitions summed over demos, per arm.
    pub gripper_transitions: [usize; NUM_ARMS],
}

const BINS: usize = 10;

pub fn dataset_stats(data: &ImportedDataset) -> DatasetStats {
    let m = &data.manifest;
    let lens: Vec<usize> = m.demos.iter().map(|d| d.len).collect();
    let (min_len, max_len) = (
        lens.iter().copied().min().unwrap_or(0),
        lens.iter().copied().max().unwrap_or(0),
    );
    let width = ((max_len - min_len) / BINS + 1).max(1);
    let mut length_histogram: Vec<LengthBin> = (min_len..=max_len)
        .step_by(width)
        .map(|lo| LengthBin {
            lo,
            hi: lo + width - 1,
            count: 0,
        })
        .collect();
    for &l in &lens {
        length_histogram[(l - min_len) / width].count += 1;
    }
    let num_objects = m.demos.first().map_or(0, |d| d.provenance.objects.len());
    let placement_boxes = (0..num_objects)
        .map(|k| {
            let mut b = WorkspaceBox {
                min: [f64::INFINITY; 3],
                max: [f64::NEG_INFINITY; 3],
            };
            for d in &m.demos {
                let p = d.provenance.objects[k].translation;
                for i in 0..3 {
                    b.min[i] = b.min[i].min(p[i]);
                    b.max[i] = b.max[i].max(p[i]);
                }
            }
            b
        })
        .collect();
    let mut gripper_transitions = [0; NUM_ARMS];
    for d in &data.demos {
        for (j, count) in gripper_transitions.iter_mut().enumerate() {
            let g = j * ACTION_DIM / NUM_ARMS + 9;
            *count += d.actions.windows(2).filter(|w| w[0][g] != w[1][g]).count();
        }
    }
    DatasetStats {
        demo_count: m.demo_count,
        total_frames: lens.iter().sum(),
        min_len,
        max_len,
        length_histogram,
        placement_boxes,
        mirrored: m.demos.iter().filter(|d| d.provenance.mirrored).count(),
        gripper_transitions,
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "demos: {} ({} mirrored)", self.demo_count, self.mirrored)?;
        writeln!(f, "frames: {} total, length {}..{}", self.total_frames, self.min_len, self.max_len)?;
        writeln!(f, "length histogram:")?;
        for b in &self.length_histogram {
            writeln!(f, "  {:>5}-{:<5} {}", b.lo, b.hi, b.count)?;
        }
        writeln!(f, "object placements:")?;
        for (k, b) in self.placement_boxes.iter().enumerate() {
            writeln!(
                f,
                "  object {}: x [{:.3}, {:.3}] y [{:.3}, {:.3}] z [{:.3}, {:.3}]",
                k + 1,
                b.min[0],
                b.max[0],
                b.min[1],
                b.max[1],
                b.min[2],
                b.max[2]
            )?;
        }
        write!(
            f,
            "gripper transitions: arm 0 {}, arm 1 {}",
            self.gripper_transitions[0], self.gripper_transitions[1]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::small_dataset;
    use crate::dataset::{export_dataset, import_dataset, ExportOptions, SourceInfo};
    use crate::synthetic::SyntheticTask;

    #[test]
    fn stats_cover_every_demo() {
        let demos = small_dataset(12);
        let dir = tempfile::tempdir().unwrap();
        export_dataset(&demos, dir.path(), &ExportOptions::default(), SourceInfo::default()).unwrap();
        let s = dataset_stats(&import_dataset(dir.path()).unwrap());
        assert_eq!(s.demo_count, 12);
        assert_eq!(s.length_histogram.iter().map(|b| b.count).sum::<usize>(), 12);
        let ws = SyntheticTask::Pour.spec().workspace;
        for b in &s.placement_boxes {
            assert!((0..3).all(|i| b.min[i] >= ws.min[i] && b.max[i] <= ws.max[i]));
        }
        // pour: arm 0 and arm 1 each close once
        assert_eq!(s.gripper_transitions, [12, 12]);
        let text = s.to_string();
        assert!(text.contains("demos: 12"));
        let json: DatasetStats = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(json, s);
    }
}
