//! Descriptive statistics of an instance.

use std::collections::BTreeMap;
use std::fmt;

use lagtrack_core::instance::{DetectionId, Instance};

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats {
    pub frames: u32,
    pub detections: usize,
    pub detections_per_frame_mean: f64,
    pub detections_per_frame_std: f64,
    pub moves: usize,
    pub divisions: usize,
    pub conflict_sets: usize,
    pub conflicts_per_frame_mean: f64,
    /// Sizes of the connected components formed by overlapping conflict
    /// sets, ascending.
    pub conflict_component_sizes: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn component_sizes(instance: &Instance) -> Vec<usize> {
    let mut slot: BTreeMap<DetectionId, usize> = BTreeMap::new();
    for c in &instance.conflicts {
        for &m in &c.members {
            let next = slot.len();
            slot.entry(m).or_insert(next);
        }
    }
    let mut parent: Vec<usize> = (0..slot.len()).collect();
    for c in &instance.conflicts {
        let first = slot[&c.members[0]];
        for m in &c.members[1..] {
            let (a, b) = (find(&mut parent, first), find(&mut parent, slot[m]));
            parent[a] = b;
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..parent.len() {
        *sizes.entry(find(&mut parent, i)).or_default() += 1;
    }
    let mut sizes: Vec<usize> = sizes.into_values().collect();
    sizes.sort_unstable();
    sizes
}

pub fn instance_stats(instance: &Instance) -> InstanceStats {
    let t = instance.frame_count.max(1) as usize;
    let mut per_frame = vec![0usize; t];
    for d in &instance.detections {
        if let Some(n) = per_frame.get_mut((d.id.frame as usize).wrapping_sub(1)) {
            *n += 1;
        }
    }
    let mean = instance.detections.len() as f64 / t as f64;
    let var = per_frame
        .iter()
        .map(|&n| (n as f64 - mean).powi(2))
        .sum::<f64>()
        / t as f64;
    let divisions = instance
        .transitions
        .iter()
        .filter(|x| x.kind.is_division())
        .count();
    InstanceStats {
        frames: instance.frame_count,
        detections: instance.detections.len(),
        detections_per_frame_mean: mean,
        detections_per_frame_std: var.sqrt(),
        moves: instance.transitions.len() - divisions,
        divisions,
        conflict_sets: instance.conflicts.len(),
        conflicts_per_frame_mean: instance.conflicts.len() as f64 / t as f64,
        conflict_component_sizes: component_sizes(instance),
    }
}

impl fmt::Display for InstanceStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes = &self.conflict_component_sizes;
        let max = sizes.last().copied().unwrap_or(0);
        let mean = if sizes.is_empty() {
            0.0
        } else {
            sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
        };
        writeln!(f, "FRAMES {}", self.frames)?;
        writeln!(f, "DETECTIONS {}", self.detections)?;
        writeln!(
            f,
            "DETECTIONS_PER_FRAME {:.3} +- {:.3}",
            self.detections_per_frame_mean, self.detections_per_frame_std
        )?;
        writeln!(f, "MOVES {}", self.moves)?;
        writeln!(f, "DIVISIONS {}", self.divisions)?;
        writeln!(f, "CONFLICT_SETS {}", self.conflict_sets)?;
        writeln!(
            f,
            "CONFLICTS_PER_FRAME {:.3}",
            self.conflicts_per_frame_mean
        )?;
        writeln!(f, "CONFLICT_COMPONENTS {}", sizes.len())?;
        writeln!(f, "CONFLICT_COMPONENT_SIZE_MAX {max}")?;
        writeln!(f, "CONFLICT_COMPONENT_SIZE_MEAN {mean:.3}")
    }
}
