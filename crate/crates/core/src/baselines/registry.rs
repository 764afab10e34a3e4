//! Every ranking method, ours included, behind one trait so evaluation and the CLI can
//! pick them by name.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    baseline_beauty_rank, baseline_glasso, baseline_kmeans_centroid, baseline_kmeans_stillness, baseline_random,
    working_descriptors, RankedFrame,
};
use crate::aesthetics::stillness_series;
use crate::clustering::{descriptor_matrix, GapConfig};
use crate::error::{Error, Result};
use crate::frame_io::Frame;
use crate::scoring::ScoreMode;
use crate::selection::{select_thumbnails, PipelineResources, SelectionConfig};

/// Settings shared by all methods. Each video gets its own seed from the caller.
#[derive(Clone, Default)]
pub struct MethodContext {
    pub lambda: f64,
    pub selection: SelectionConfig,
    pub gap: GapConfig,
    pub resources: PipelineResources,
}

pub trait ThumbnailMethod: Send + Sync {
    fn name(&self) -> &'static str;
    /// At least the top `k` picks (more when the method ranks everything anyway), best
    /// first.
    fn rank(&self, frames: &[Frame], fps: f64, k: usize, seed: u64) -> Result<Vec<RankedFrame>>;
}

pub type MethodFactory = fn(&MethodContext) -> Result<Box<dyn ThumbnailMethod>>;

pub struct MethodRegistry {
    factories: BTreeMap<&'static str, MethodFactory>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: MethodFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn create(&self, name: &str, ctx: &MethodContext) -> Result<Box<dyn ThumbnailMethod>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "method",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        factory(ctx)
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("ours-unsupervised", |ctx| Ok(Box::new(Ours::new(ctx, ScoreMode::Unsupervised)?)));
        r.register("ours-supervised", |ctx| Ok(Box::new(Ours::new(ctx, ScoreMode::Supervised)?)));
        r.register("random", |_| Ok(Box::new(Random)));
        r.register("kmeans-centroid", |ctx| Ok(Box::new(KMeansCentroid { gap: ctx.gap })));
        r.register("kmeans-stillness", |ctx| Ok(Box::new(KMeansStillness { gap: ctx.gap })));
        r.register("glasso", |ctx| {
            if !(ctx.lambda >= 0.0) {
                return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", ctx.lambda)));
            }
            Ok(Box::new(Glasso { lambda: ctx.lambda }))
        });
        r.register("beauty", |ctx| {
            if ctx.resources.model.is_none() {
                return Err(Error::ModelMissing);
            }
            Ok(Box::new(Beauty { resources: ctx.resources.clone() }))
        });
        r
    }
}

struct Ours {
    config: SelectionConfig,
    resources: PipelineResources,
}

impl Ours {
    fn new(ctx: &MethodContext, mode: ScoreMode) -> Result<Self> {
        if mode == ScoreMode::Supervised && ctx.resources.model.is_none() {
            return Err(Error::ModelMissing);
        }
        Ok(Self {
            config: SelectionConfig {
                mode,
                ..ctx.selection.clone()
            },
            resources: ctx.resources.clone(),
        })
    }
}

impl ThumbnailMethod for Ours {
    fn name(&self) -> &'static str {
        match self.config.mode {
            ScoreMode::Unsupervised => "ours-unsupervised",
            ScoreMode::Supervised => "ours-supervised",
        }
    }

    fn rank(&self, frames: &[Frame], fps: f64, _k: usize, seed: u64) -> Result<Vec<RankedFrame>> {
        let config = SelectionConfig {
            seed,
            ..self.config.clone()
        };
        let selection = select_thumbnails(frames, frames.len() as f64 / fps, &config, &self.resources)?;
        Ok(selection
            .ranked
            .iter()
            .map(|c| RankedFrame {
                frame_index: c.frame_index,
                score: Some(c.attractiveness),
                cluster_id: Some(c.cluster_id),
                cluster_size: Some(c.cluster_size),
            })
            .collect())
    }
}

struct Random;

impl ThumbnailMethod for Random {
    fn name(&self) -> &'static str {
        "random"
    }

    fn rank(&self, frames: &[Frame], _fps: f64, k: usize, seed: u64) -> Result<Vec<RankedFrame>> {
        let picks = baseline_random(frames.len(), k.min(frames.len()), seed)?;
        Ok(picks.into_iter().map(RankedFrame::plain).collect())
    }
}

struct KMeansCentroid {
    gap: GapConfig,
}

impl ThumbnailMethod for KMeansCentroid {
    fn name(&self) -> &'static str {
        "kmeans-centroid"
    }

    fn rank(&self, frames: &[Frame], _fps: f64, _k: usize, seed: u64) -> Result<Vec<RankedFrame>> {
        let descriptors = working_descriptors(frames)?;
        let indices: Vec<usize> = descriptors.iter().map(|d| d.index).collect();
        baseline_kmeans_centroid(descriptor_matrix(&descriptors).view(), &indices, &self.gap, seed)
    }
}

struct KMeansStillness {
    gap: GapConfig,
}

impl ThumbnailMethod for KMeansStillness {
    fn name(&self) -> &'static str {
        "kmeans-stillness"
    }

    fn rank(&self, frames: &[Frame], _fps: f64, _k: usize, seed: u64) -> Result<Vec<RankedFrame>> {
        let descriptors = working_descriptors(frames)?;
        let indices: Vec<usize> = descriptors.iter().map(|d| d.index).collect();
        let grays: Vec<_> = frames.par_iter().map(Frame::to_gray).collect();
        let stillness = stillness_series(&grays)?;
        baseline_kmeans_stillness(descriptor_matrix(&descriptors).view(), &indices, &stillness, &self.gap, seed)
    }
}

struct Glasso {
    lambda: f64,
}

impl ThumbnailMethod for Glasso {
    fn name(&self) -> &'static str {
        "glasso"
    }

    fn rank(&self, frames: &[Frame], _fps: f64, _k: usize, _seed: u64) -> Result<Vec<RankedFrame>> {
        let descriptors = working_descriptors(frames)?;
        let (ranked, coefficients) = baseline_glasso(&descriptors, self.lambda)?;
        if !coefficients.converged {
            log::warn!(
                "group lasso did not converge (lambda {}, change {:.3e}); using its best iterate",
                self.lambda,
                coefficients.last_change
            );
        }
        Ok(ranked)
    }
}

struct Beauty {
    resources: PipelineResources,
}

impl ThumbnailMethod for Beauty {
    fn name(&self) -> &'static str {
        "beauty"
    }

    fn rank(&self, frames: &[Frame], _fps: f64, _k: usize, _seed: u64) -> Result<Vec<RankedFrame>> {
        baseline_beauty_rank(frames, self.resources.model.as_deref(), &self.resources.extractor)
    }
}
