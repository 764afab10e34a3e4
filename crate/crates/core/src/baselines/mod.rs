//! Comparison methods: random frames, k-means with centroid or stillness picks, sparse
//! dictionary selection and beauty rank. They see every frame; none of them filters.

pub mod glasso;
mod registry;

pub use glasso::{group_lasso, group_lasso_with, zero_solution_lambda, SparseCoefficients};
pub use registry::{MethodContext, MethodFactory, MethodRegistry, ThumbnailMethod};

use ndarray::ArrayView2;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aesthetics::AestheticExtractor;
use crate::clustering::{cluster_with_gap, descriptor_matrix, sq_dist, Clustering, GapConfig};
use crate::descriptors::{compute_descriptor, FrameDescriptor};
use crate::error::{Error, Result};
use crate::frame_io::Frame;
use crate::scoring::ForestModel;
use crate::seeding;

pub const BEAUTY_STRIDE: usize = 5;
/// Above this many frames the clustering and dictionary baselines work on every
/// `BEAUTY_STRIDE`-th frame.
pub const SUBSAMPLE_ABOVE: usize = 2000;

/// One ranked pick of a method; fields a method does not produce are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFrame {
    pub frame_index: usize,
    pub score: Option<f64>,
    pub cluster_id: Option<usize>,
    pub cluster_size: Option<usize>,
}

impl RankedFrame {
    pub fn plain(frame_index: usize) -> Self {
        Self {
            frame_index,
            score: None,
            cluster_id: None,
            cluster_size: None,
        }
    }
}

/// `k` distinct frames drawn uniformly without replacement, in draw order.
pub fn baseline_random(n_frames: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n_frames {
        return Err(Error::KTooLarge { k, n: n_frames });
    }
    Ok(index::sample(&mut seeding::rng(seed), n_frames, k).into_vec())
}

/// Frame indices the clustering and dictionary baselines operate on.
pub fn working_frames(n_frames: usize) -> Vec<usize> {
    if n_frames > SUBSAMPLE_ABOVE {
        (0..n_frames).step_by(BEAUTY_STRIDE).collect()
    } else {
        (0..n_frames).collect()
    }
}

pub fn working_descriptors(frames: &[Frame]) -> Result<Vec<FrameDescriptor>> {
    working_frames(frames.len()).par_iter().map(|&i| compute_descriptor(&frames[i])).collect()
}

/// Clusters whose centroids coincide exactly are merged (identical frames otherwise
/// yield several clusters with one centroid).
fn merged_groups(clustering: &Clustering) -> Vec<Vec<usize>> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for c in 0..clustering.k {
        let members = clustering.members(c);
        if members.is_empty() {
            continue;
        }
        let centroid = clustering.centroids.row(c);
        match groups.iter_mut().find(|(rep, _)| clustering.centroids.row(*rep) == centroid) {
            Some((_, g)) => g.extend(members),
            None => groups.push((c, members)),
        }
    }
    groups
        .into_iter()
        .map(|(_, mut g)| {
            g.sort_unstable();
            g
        })
        .collect()
}

/// The shared partition of both k-means baselines: gap-statistic k-means over the rows
/// of `points`, with coinciding clusters merged. Groups hold row numbers.
pub fn kmeans_partition(points: ArrayView2<f64>, gap: &GapConfig, seed: u64) -> Result<(Clustering, Vec<Vec<usize>>)> {
    let (_, clustering) = cluster_with_gap(points, gap, seed)?;
    let groups = merged_groups(&clustering);
    Ok((clustering, groups))
}

fn rank_groups(picks: Vec<RankedFrame>) -> Vec<RankedFrame> {
    let mut picks = picks;
    picks.sort_by(|a, b| {
        b.cluster_size
            .cmp(&a.cluster_size)
            .then_with(|| a.frame_index.cmp(&b.frame_index))
    });
    picks
}

/// One frame per cluster, the one nearest its centroid; clusters ranked by size.
/// `frame_indices[r]` is the frame of row `r`.
pub fn baseline_kmeans_centroid(points: ArrayView2<f64>, frame_indices: &[usize], gap: &GapConfig, seed: u64) -> Result<Vec<RankedFrame>> {
    check_rows(points, frame_indices)?;
    let (clustering, groups) = kmeans_partition(points, gap, seed)?;
    let picks = groups
        .iter()
        .enumerate()
        .map(|(id, rows)| {
            let centroid = clustering.centroids.row(clustering.assignment[rows[0]]);
            let (row, d) = rows
                .iter()
                .map(|&r| (r, sq_dist(points.row(r), centroid)))
                .fold((rows[0], f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            RankedFrame {
                frame_index: frame_indices[row],
                score: Some(-d.sqrt()),
                cluster_id: Some(id),
                cluster_size: Some(rows.len()),
            }
        })
        .collect();
    Ok(rank_groups(picks))
}

/// As [`baseline_kmeans_centroid`] but picks the stillest frame of each cluster.
/// `stillness` is indexed by frame index.
pub fn baseline_kmeans_stillness(points: ArrayView2<f64>, frame_indices: &[usize], stillness: &[f64], gap: &GapConfig, seed: u64) -> Result<Vec<RankedFrame>> {
    check_rows(points, frame_indices)?;
    if let Some(&f) = frame_indices.iter().find(|&&f| f >= stillness.len()) {
        return Err(Error::DimensionMismatch(format!("no stillness for frame {f}")));
    }
    let (_, groups) = kmeans_partition(points, gap, seed)?;
    let picks = groups
        .iter()
        .enumerate()
        .map(|(id, rows)| {
            let frame = rows
                .iter()
                .map(|&r| frame_indices[r])
                .fold(frame_indices[rows[0]], |best, f| if stillness[f] > stillness[best] { f } else { best });
            RankedFrame {
                frame_index: frame,
                score: Some(stillness[frame]),
                cluster_id: Some(id),
                cluster_size: Some(rows.len()),
            }
        })
        .collect();
    Ok(rank_groups(picks))
}

fn check_rows(points: ArrayView2<f64>, frame_indices: &[usize]) -> Result<()> {
    if points.nrows() != frame_indices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows for {} frame indices",
            points.nrows(),
            frame_indices.len()
        )));
    }
    if frame_indices.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Frames ranked by their representativeness `s_i` (lowest index on ties).
pub fn baseline_glasso(descriptors: &[FrameDescriptor], lambda: f64) -> Result<(Vec<RankedFrame>, SparseCoefficients)> {
    if descriptors.is_empty() {
        return Err(Error::EmptyInput);
    }
    // columns are frames
    let x = descriptor_matrix(descriptors).reversed_axes();
    let coefficients = group_lasso(x.view(), lambda)?;
    let mut order: Vec<usize> = (0..descriptors.len()).collect();
    order.sort_by(|&a, &b| {
        coefficients.row_scores[b]
            .total_cmp(&coefficients.row_scores[a])
            .then_with(|| descriptors[a].index.cmp(&descriptors[b].index))
    });
    let ranked = order
        .into_iter()
        .map(|i| RankedFrame {
            score: Some(coefficients.row_scores[i]),
            ..RankedFrame::plain(descriptors[i].index)
        })
        .collect();
    Ok((ranked, coefficients))
}

/// Scores every fifth frame with the forest and ranks them by score (lowest index on
/// ties). Near-duplicates are kept.
pub fn baseline_beauty_rank(frames: &[Frame], model: Option<&ForestModel>, extractor: &AestheticExtractor) -> Result<Vec<RankedFrame>> {
    let model = model.ok_or(Error::ModelMissing)?;
    let mut scored: Vec<RankedFrame> = frames
        .par_iter()
        .step_by(BEAUTY_STRIDE)
        .map(|f| {
            let v = extractor.compute(f)?;
            Ok(RankedFrame {
                score: Some(model.predict_slice(v.values())?),
                ..RankedFrame::plain(f.index)
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| {
        b.score
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.score.unwrap_or(f64::NEG_INFINITY))
            .then_with(|| a.frame_index.cmp(&b.frame_index))
    });
    Ok(scored)
}
