//! Seeded k-means, gap-statistic model selection, subshot segmentation and stillness
//! keyframes.

mod gap;
mod kmeans;
mod subshots;

pub use gap::{cluster_with_gap, gap_statistic, reference_sample, GapConfig, GapResult, LOG_EPS};
pub use kmeans::{inertia, kmeans, kmeans_best_of, sq_dist, Clustering, MAX_ITER};
pub use subshots::{descriptor_matrix, extract_keyframes, segment_subshots, Subshot};
