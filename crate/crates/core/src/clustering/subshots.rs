use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use crate::descriptors::FrameDescriptor;
use crate::error::{Error, Result};
use crate::quality_filter::FrameMask;

/// A maximal run of frames within one shot sharing a cluster id. `start` and `end` are
/// inclusive frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subshot {
    pub shot_id: usize,
    pub start: usize,
    pub end: usize,
    pub cluster_id: usize,
}

impl Subshot {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

pub fn descriptor_matrix(descriptors: &[FrameDescriptor]) -> Array2<f64> {
    let dim = descriptors.first().map_or(0, |d| d.vector.len());
    Array2::from_shape_fn((descriptors.len(), dim), |(i, j)| descriptors[i].vector[j] as f64)
}

/// Clusters the kept frames with `k = #shots` (clamped to the number of kept frames) and
/// splits every shot into runs of equal cluster id. `descriptors` must hold one entry per
/// kept frame, in frame order.
pub fn segment_subshots(mask: &FrameMask, descriptors: &[FrameDescriptor], seed: u64) -> Result<Vec<Subshot>> {
    if mask.shots.is_empty() {
        return Err(Error::EmptyInput);
    }
    let kept = mask.kept_indices();
    if kept.len() != descriptors.len() || kept.iter().zip(descriptors).any(|(&i, d)| i != d.index) {
        return Err(Error::DimensionMismatch(format!(
            "{} descriptors for {} kept frames",
            descriptors.len(),
            kept.len()
        )));
    }
    let k = mask.shots.len().min(kept.len());
    if k < mask.shots.len() {
        log::warn!("subshot clustering: k {} clamped to {} frames", mask.shots.len(), kept.len());
    }
    let clustering = kmeans(descriptor_matrix(descriptors).view(), k, seed)?;
    let cluster_of = |frame: usize| clustering.assignment[kept.binary_search(&frame).expect("shot frames are kept")];

    let mut subshots = Vec::new();
    for (shot_id, &(start, end)) in mask.shots.iter().enumerate() {
        let mut run_start = start;
        for f in start + 1..=end + 1 {
            if f > end || cluster_of(f) != cluster_of(run_start) {
                subshots.push(Subshot {
                    shot_id,
                    start: run_start,
                    end: f - 1,
                    cluster_id: cluster_of(run_start),
                });
                run_start = f;
            }
        }
    }
    Ok(subshots)
}

/// The stillest frame of each subshot (lowest index on ties). `stillness` is indexed by
/// frame index.
pub fn extract_keyframes(subshots: &[Subshot], stillness: &[f64]) -> Result<Vec<usize>> {
    subshots
        .iter()
        .map(|s| {
            if s.end >= stillness.len() || s.start > s.end {
                return Err(Error::DimensionMismatch(format!(
                    "subshot {}..={} outside {} stillness values",
                    s.start,
                    s.end,
                    stillness.len()
                )));
            }
            Ok(s.frames().fold(s.start, |best, f| if stillness[f] > stillness[best] { f } else { best }))
        })
        .collect()
}
