//! The end-to-end pipeline: filter, subshots and stillness keyframes, keyframe
//! clustering, per-cluster scoring and cluster-size ranking.

use std::cmp::Ordering;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aesthetics::{stillness_series, AestheticExtractor};
use crate::clustering::{cluster_with_gap, descriptor_matrix, extract_keyframes, segment_subshots, GapConfig, Subshot};
use crate::descriptors::{compute_descriptor, FrameDescriptor};
use crate::error::{Error, Result};
use crate::frame_io::{Frame, FrameSource};
use crate::quality_filter::{filter_frames, FilterConfig, FilterReport};
use crate::scoring::{score_keyframes, scorer_for, ForestModel, ScoreMode, ScoreTable, ScorerContext};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbnailCandidate {
    pub rank: usize,
    pub frame_index: usize,
    pub timestamp_s: f64,
    pub cluster_id: usize,
    /// Number of keyframes in the cluster.
    pub cluster_size: usize,
    pub attractiveness: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub filter_s: f64,
    pub keyframes_s: f64,
    pub clustering_s: f64,
    pub scoring_s: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.filter_s + self.keyframes_s + self.clustering_s + self.scoring_s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub frames_total: usize,
    pub frames_after_filter: usize,
    pub shots: usize,
    pub subshots: usize,
    pub keyframes: usize,
    pub clusters: usize,
    /// Cluster count chosen by the gap statistic; `None` when there were too few
    /// keyframes and every keyframe became its own cluster.
    pub gap_k: Option<usize>,
    /// Every frame failed the quality filters and the pipeline ran unfiltered.
    pub filter_fallback: bool,
    pub wall_time: StageTimes,
    pub video_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub mode: ScoreMode,
    pub k_output: usize,
    pub seed: u64,
    pub filter: FilterConfig,
    pub k_min: usize,
    pub k_max: usize,
    pub gap_references: usize,
    pub gap_ref_samples: usize,
    pub gap_restarts: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let gap = GapConfig::default();
        Self {
            mode: ScoreMode::Unsupervised,
            k_output: 5,
            seed: 42,
            filter: FilterConfig::default(),
            k_min: gap.k_min,
            k_max: gap.k_max,
            gap_references: gap.references,
            gap_ref_samples: gap.ref_samples,
            gap_restarts: gap.restarts,
        }
    }
}

impl SelectionConfig {
    pub fn gap(&self) -> GapConfig {
        GapConfig {
            k_min: self.k_min,
            k_max: self.k_max,
            references: self.gap_references,
            ref_samples: self.gap_ref_samples,
            restarts: self.gap_restarts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if self.k_output == 0 {
            return Err(Error::InvalidConfig("k_output must be at least 1".into()));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!("bad cluster range {}..={}", self.k_min, self.k_max)));
        }
        Ok(())
    }
}

/// Everything the pipeline computed for one video.
#[derive(Debug, Clone)]
pub struct Selection {
    /// One candidate per keyframe cluster, ranked.
    pub ranked: Vec<ThumbnailCandidate>,
    pub report: PipelineReport,
    pub filter: FilterReport,
    pub keyframes: Vec<usize>,
    /// Keyframe frame indices per cluster id.
    pub clusters: Vec<Vec<usize>>,
    pub scores: ScoreTable,
    pub stillness: Vec<f64>,
}

impl Selection {
    pub fn top(&self, k: usize) -> &[ThumbnailCandidate] {
        &self.ranked[..k.min(self.ranked.len())]
    }
}

/// Picks the best-scoring keyframe of every cluster (lowest frame index on ties) and
/// orders clusters by size, then attractiveness, then frame index.
pub fn rank_candidates(clusters: &[Vec<usize>], scores: &ScoreTable, timestamps: &[f64]) -> Result<Vec<ThumbnailCandidate>> {
    let score = |f: usize| scores.get(f).ok_or_else(|| Error::InvalidData(format!("keyframe {f} has no score")));
    let mut out = Vec::with_capacity(clusters.len());
    for (cluster_id, members) in clusters.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for &f in members {
            let s = score(f)?;
            best = match best {
                Some((bf, bs)) if bs > s || (bs == s && bf < f) => Some((bf, bs)),
                _ => Some((f, s)),
            };
        }
        let Some((frame_index, attractiveness)) = best else {
            return Err(Error::InvalidData(format!("cluster {cluster_id} is empty")));
        };
        out.push(ThumbnailCandidate {
            rank: 0,
            frame_index,
            timestamp_s: timestamps.get(frame_index).copied().unwrap_or(f64::NAN),
            cluster_id,
            cluster_size: members.len(),
            attractiveness,
        });
    }
    out.sort_by(candidate_order);
    for (r, c) in out.iter_mut().enumerate() {
        c.rank = r + 1;
    }
    Ok(out)
}

fn candidate_order(a: &ThumbnailCandidate, b: &ThumbnailCandidate) -> Ordering {
    b.cluster_size
        .cmp(&a.cluster_size)
        .then_with(|| b.attractiveness.total_cmp(&a.attractiveness))
        .then_with(|| a.frame_index.cmp(&b.frame_index))
}

/// Loaded resources the pipeline may need besides the frames.
#[derive(Clone, Default)]
pub struct PipelineResources {
    pub model: Option<Arc<ForestModel>>,
    pub extractor: Arc<AestheticExtractor>,
}

/// Groups keyframes into clusters of similar content. With fewer keyframes than
/// `k_min` every keyframe is its own cluster.
pub fn cluster_keyframes(descriptors: &[FrameDescriptor], gap: &GapConfig, seed: u64) -> Result<(Vec<Vec<usize>>, Option<usize>)> {
    if descriptors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if descriptors.len() < gap.k_min {
        return Ok((descriptors.iter().map(|d| vec![d.index]).collect(), None));
    }
    let points = descriptor_matrix(descriptors);
    let (result, clustering) = cluster_with_gap(points.view(), gap, seed)?;
    let k = result.k_star;
    let mut clusters = vec![Vec::new(); k];
    for (d, &c) in descriptors.iter().zip(&clustering.assignment) {
        clusters[c].push(d.index);
    }
    clusters.retain(|c| !c.is_empty());
    Ok((clusters, Some(k)))
}

pub fn select_from_source(source: &mut dyn FrameSource, config: &SelectionConfig, resources: &PipelineResources) -> Result<Selection> {
    let frames = crate::frame_io::read_all(source)?;
    let duration = frames.len() as f64 / source.info().fps();
    select_thumbnails(&frames, duration, config, resources)
}

/// Output of the filter and keyframe stages.
#[derive(Debug, Clone)]
pub struct KeyframeStage {
    pub filter: FilterReport,
    /// Every frame failed the quality filters and the stages ran unfiltered.
    pub filter_fallback: bool,
    /// Descriptors of the kept frames, in frame order.
    pub descriptors: Vec<FrameDescriptor>,
    /// Stillness of every frame against its predecessor.
    pub stillness: Vec<f64>,
    pub subshots: Vec<Subshot>,
    pub keyframes: Vec<usize>,
    pub times: StageTimes,
}

/// Filters the frames (falling back to no filtering when nothing survives), splits the
/// shots into subshots and picks the stillest frame of each.
pub fn extract_keyframe_stage(frames: &[Frame], config: &SelectionConfig) -> Result<KeyframeStage> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut times = StageTimes::default();
    let clock = Instant::now();
    let (filter, filter_fallback) = match filter_frames(frames, &config.filter) {
        Ok(report) => (report, false),
        Err(Error::AllFramesFiltered) => {
            log::warn!("every frame failed the quality filters; running unfiltered");
            (filter_frames(frames, &config.filter.disabled())?, true)
        }
        Err(e) => return Err(e),
    };
    times.filter_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let kept = filter.mask.kept_indices();
    let descriptors: Vec<FrameDescriptor> = kept.par_iter().map(|&i| compute_descriptor(&frames[i])).collect::<Result<_>>()?;
    let grays: Vec<_> = frames.par_iter().map(Frame::to_gray).collect();
    let stillness = stillness_series(&grays)?;
    let subshots = segment_subshots(&filter.mask, &descriptors, seeding::derive(config.seed, 1))?;
    let keyframes = extract_keyframes(&subshots, &stillness)?;
    times.keyframes_s = clock.elapsed().as_secs_f64();
    Ok(KeyframeStage {
        filter,
        filter_fallback,
        descriptors,
        stillness,
        subshots,
        keyframes,
        times,
    })
}

pub fn select_thumbnails(frames: &[Frame], video_duration_s: f64, config: &SelectionConfig, resources: &PipelineResources) -> Result<Selection> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyStream);
    }
    let ctx = ScorerContext {
        model: resources.model.clone(),
        extractor: resources.extractor.clone(),
    };
    let scorer = scorer_for(config.mode, &ctx)?;
    let KeyframeStage {
        filter,
        filter_fallback,
        descriptors,
        stillness,
        subshots,
        keyframes,
        mut times,
    } = extract_keyframe_stage(frames, config)?;
    let kept = filter.mask.kept_indices();

    let clock = Instant::now();
    let keyframe_descriptors: Vec<FrameDescriptor> = keyframes
        .iter()
        .map(|&f| descriptors[kept.binary_search(&f).expect("keyframes are kept frames")].clone())
        .collect();
    let (clusters, gap_k) = cluster_keyframes(&keyframe_descriptors, &config.gap(), seeding::derive(config.seed, 2))?;
    times.clustering_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let scores = score_keyframes(&keyframes, frames, &stillness, scorer.as_ref())?;
    let timestamps: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    let ranked = rank_candidates(&clusters, &scores, &timestamps)?;
    times.scoring_s = clock.elapsed().as_secs_f64();

    let report = PipelineReport {
        frames_total: frames.len(),
        frames_after_filter: kept.len(),
        shots: filter.mask.shots.len(),
        subshots: subshots.len(),
        keyframes: keyframes.len(),
        clusters: clusters.len(),
        gap_k,
        filter_fallback,
        wall_time: times,
        video_duration_s,
    };
    if report.wall_time.total() > 0.1 * video_duration_s {
        log::info!(
            "pipeline took {:.3}s for {:.3}s of video (over the 10% budget)",
            report.wall_time.total(),
            video_duration_s
        );
    }
    Ok(Selection {
        ranked,
        report,
        filter,
        keyframes,
        clusters,
        scores,
        stillness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::descriptor_distance;
    use crate::fixtures;
    use proptest::prelude::*;

    fn table(entries: &[(usize, f64)]) -> ScoreTable {
        ScoreTable {
            mode: ScoreMode::Unsupervised,
            entries: entries.to_vec(),
        }
    }

    #[test]
    fn ranks_follow_cluster_sizes() {
        let clusters = vec![vec![0, 1, 2], vec![3, 4, 5, 6, 7], vec![8, 9]];
        let scores = table(&(0..10).map(|i| (i, i as f64 * 0.1)).collect::<Vec<_>>());
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let r = rank_candidates(&clusters, &scores, &ts).unwrap();
        assert_eq!(r.iter().map(|c| c.cluster_size).collect::<Vec<_>>(), vec![5, 3, 2]);
        assert_eq!(r.iter().map(|c| c.frame_index).collect::<Vec<_>>(), vec![7, 2, 9]);
        assert_eq!(r.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn equal_sizes_order_by_attractiveness_then_index() {
        let clusters = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let scores = table(&[(0, 0.2), (1, 0.2), (2, 0.9), (3, 0.1), (4, 0.2), (5, 0.0)]);
        let r = rank_candidates(&clusters, &scores, &[0.0; 6]).unwrap();
        assert_eq!(r.iter().map(|c| c.frame_index).collect::<Vec<_>>(), vec![2, 0, 4]);
    }

    proptest! {
        #[test]
        fn increasing_transforms_keep_the_choice(
            sizes in proptest::collection::vec(1usize..5, 1..6),
            raw in proptest::collection::vec(0u8..6, 30),
            a in 0.1f64..5.0,
        ) {
            let mut clusters = Vec::new();
            let mut next = 0;
            for s in sizes {
                clusters.push((next..next + s).collect::<Vec<_>>());
                next += s;
            }
            let base: Vec<(usize, f64)> = (0..next).map(|i| (i, raw[i] as f64 / 5.0)).collect();
            let moved: Vec<(usize, f64)> = base.iter().map(|&(i, s)| (i, (a * s).exp() + s.powi(3))).collect();
            let ts = vec![0.0; next];
            let r1 = rank_candidates(&clusters, &table(&base), &ts).unwrap();
            let r2 = rank_candidates(&clusters, &table(&moved), &ts).unwrap();
            let key = |r: &[ThumbnailCandidate]| r.iter().map(|c| (c.frame_index, c.cluster_id, c.rank)).collect::<Vec<_>>();
            prop_assert_eq!(key(&r1), key(&r2));
        }
    }

    #[test]
    fn single_frame_video() {
        let frames = fixtures::cut_video(&[1], 32, 24, 0);
        let s = select_thumbnails(&frames, 1.0 / 30.0, &SelectionConfig::default(), &PipelineResources::default()).unwrap();
        assert_eq!(s.ranked.len(), 1);
        assert_eq!((s.ranked[0].rank, s.ranked[0].frame_index), (1, 0));
    }

    #[test]
    fn all_filtered_falls_back() {
        let frames: Vec<Frame> = (0..12).map(|i| Frame::from_fn(i, fixtures::timestamp(i), 32, 24, |_, _| [0.02; 3])).collect();
        let s = select_thumbnails(&frames, 0.4, &SelectionConfig::default(), &PipelineResources::default()).unwrap();
        assert!(s.report.filter_fallback);
        assert!(!s.ranked.is_empty());
        assert_eq!(s.report.frames_after_filter, 12);
    }

    #[test]
    fn empty_stream_and_missing_model() {
        let r = select_thumbnails(&[], 0.0, &SelectionConfig::default(), &PipelineResources::default());
        assert!(matches!(r, Err(Error::EmptyStream)));
        let frames = fixtures::cut_video(&[3], 32, 24, 0);
        let config = SelectionConfig {
            mode: ScoreMode::Supervised,
            ..SelectionConfig::default()
        };
        assert!(matches!(
            select_thumbnails(&frames, 0.1, &config, &PipelineResources::default()),
            Err(Error::ModelMissing)
        ));
    }

    #[test]
    fn planted_best_frame_is_rank_one() {
        for seed in 0..3 {
            let (frames, answer) = fixtures::planted_pipeline_video(seed);
            let config = SelectionConfig {
                seed,
                ..SelectionConfig::default()
            };
            let s = select_thumbnails(&frames, frames.len() as f64 / fixtures::FPS, &config, &PipelineResources::default()).unwrap();
            assert_eq!(s.ranked[0].frame_index, answer, "seed {seed}: {:?}", s.report);
            assert!(s.ranked.iter().all(|c| s.filter.mask.keep[c.frame_index]));
            assert!(s.report.frames_after_filter <= s.report.frames_total);
            assert!(s.report.keyframes <= s.report.frames_after_filter);

            let descriptors: Vec<_> = s.ranked.iter().map(|c| compute_descriptor(&frames[c.frame_index]).unwrap()).collect();
            for i in 0..descriptors.len() {
                for j in i + 1..descriptors.len() {
                    assert!(descriptor_distance(&descriptors[i], &descriptors[j]).unwrap() > 0.1);
                }
            }
        }
    }

    #[test]
    fn deterministic_across_runs_and_threads() {
        let (frames, _) = fixtures::planted_pipeline_video(4);
        let config = SelectionConfig {
            seed: 4,
            ..SelectionConfig::default()
        };
        let a = select_thumbnails(&frames, 10.0, &config, &PipelineResources::default()).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| select_thumbnails(&frames, 10.0, &config, &PipelineResources::default()).unwrap());
        assert_eq!(a.ranked, b.ranked);
        assert_eq!(a.clusters, b.clusters);
    }
}
