//! Near-duplicate matching against a ground-truth frame and precision at k over a corpus.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::ThumbnailMethod;
use crate::descriptors::{compute_descriptor, descriptor_distance, MAX_DISTANCE};
use crate::error::{Error, Result};
use crate::frame_io::{guess_source_kind, load_image, read_all, Frame, SourceKind, SourceOptions, SourceRegistry};
use crate::imageops;
use crate::seeding;

/// Side of the square downscale the pixel matcher compares.
pub const MATCH_SIZE: usize = 64;
pub const DEFAULT_THETA: f64 = 0.005;
pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    ExactIndex,
    DescriptorL2,
    PixelSsd,
}

impl MatcherKind {
    pub const ALL: [MatcherKind; 3] = [MatcherKind::ExactIndex, MatcherKind::DescriptorL2, MatcherKind::PixelSsd];

    pub fn name(self) -> &'static str {
        match self {
            MatcherKind::ExactIndex => "exact_index",
            MatcherKind::DescriptorL2 => "descriptor_l2",
            MatcherKind::PixelSsd => "pixel_ssd",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| Error::UnknownStrategy {
            kind: "matcher",
            name: name.to_string(),
            available: Self::ALL.map(|k| k.name()).join(", "),
        })
    }

    pub fn matcher(self) -> &'static dyn NearDuplicateMatcher {
        match self {
            MatcherKind::ExactIndex => &ExactIndex,
            MatcherKind::DescriptorL2 => &DescriptorL2,
            MatcherKind::PixelSsd => &PixelSsd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub matcher: MatcherKind,
    pub theta: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            matcher: MatcherKind::PixelSsd,
            theta: DEFAULT_THETA,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(Error::InvalidConfig(format!("theta must be >= 0, got {}", self.theta)));
        }
        Ok(())
    }

    pub fn matches(&self, candidate: Subject, reference: Subject) -> Result<bool> {
        Ok(self.matcher.matcher().distance(candidate, reference)? < self.theta)
    }
}

/// What is known about one side of a comparison.
#[derive(Debug, Clone, Copy, Default)]
pub struct Subject<'a> {
    pub index: Option<usize>,
    pub frame: Option<&'a Frame>,
}

impl<'a> Subject<'a> {
    pub fn frame(index: usize, frame: &'a Frame) -> Self {
        Self {
            index: Some(index),
            frame: Some(frame),
        }
    }
}

pub trait NearDuplicateMatcher: Send + Sync {
    fn name(&self) -> &'static str;
    /// Distance compared against theta; a match is `distance < theta`.
    fn distance(&self, a: Subject, b: Subject) -> Result<f64>;
}

fn unavailable(matcher: &dyn NearDuplicateMatcher, what: &str) -> Error {
    Error::MatcherUnavailable(matcher.name().to_string(), what.to_string())
}

struct ExactIndex;

impl NearDuplicateMatcher for ExactIndex {
    fn name(&self) -> &'static str {
        "exact_index"
    }

    fn distance(&self, a: Subject, b: Subject) -> Result<f64> {
        match (a.index, b.index) {
            (Some(x), Some(y)) => Ok(if x == y { 0.0 } else { f64::INFINITY }),
            _ => Err(unavailable(self, "both sides need a frame index")),
        }
    }
}

struct DescriptorL2;

impl NearDuplicateMatcher for DescriptorL2 {
    fn name(&self) -> &'static str {
        "descriptor_l2"
    }

    /// Descriptor distance scaled to `[0, 1]`.
    fn distance(&self, a: Subject, b: Subject) -> Result<f64> {
        let (Some(fa), Some(fb)) = (a.frame, b.frame) else {
            return Err(unavailable(self, "both sides need pixels"));
        };
        Ok(descriptor_distance(&compute_descriptor(fa)?, &compute_descriptor(fb)?)? / MAX_DISTANCE)
    }
}

struct PixelSsd;

/// RGB planes of a frame resampled to `MATCH_SIZE x MATCH_SIZE`.
pub fn pixel_signature(frame: &Frame) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = Vec::with_capacity(3 * MATCH_SIZE * MATCH_SIZE);
    for c in 0..3 {
        let plane: Vec<f32> = frame.rgb().iter().skip(c).step_by(3).copied().collect();
        out.extend(imageops::resample_plane(&plane, w, h, MATCH_SIZE, MATCH_SIZE));
    }
    out
}

pub fn signature_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

impl NearDuplicateMatcher for PixelSsd {
    fn name(&self) -> &'static str {
        "pixel_ssd"
    }

    /// Mean squared difference of the 64x64 downscales, channels in `[0, 1]`.
    fn distance(&self, a: Subject, b: Subject) -> Result<f64> {
        let (Some(fa), Some(fb)) = (a.frame, b.frame) else {
            return Err(unavailable(self, "both sides need pixels"));
        };
        Ok(signature_mse(&pixel_signature(fa), &pixel_signature(fb)))
    }
}

/// 1 when any of the first `k` candidates matches, else 0. `k` beyond the list length
/// means the whole list.
pub fn precision_at_k(candidates: &[usize], k: usize, mut is_match: impl FnMut(usize) -> Result<bool>) -> Result<u8> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    for &c in candidates.iter().take(k) {
        if is_match(c)? {
            return Ok(1);
        }
    }
    Ok(0)
}

/// Ground truth of one video: a frame index, an image, or both.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub frame_index: Option<usize>,
    pub image: Option<&'a Frame>,
}

impl<'a> GroundTruth<'a> {
    fn subject(&self, frames: &'a [Frame]) -> Subject<'a> {
        Subject {
            index: self.frame_index,
            frame: self.image.or_else(|| self.frame_index.and_then(|i| frames.get(i))),
        }
    }
}

/// P@k of a ranked candidate list for every k in `ks`.
pub fn precision_at_ks(candidates: &[usize], frames: &[Frame], gt: GroundTruth, ks: &[usize], config: &MatchConfig) -> Result<Vec<u8>> {
    let reference = gt.subject(frames);
    let max_k = ks.iter().copied().max().unwrap_or(0);
    // match each of the top candidates once, then read every k off the prefix
    let mut first_hit = None;
    for (pos, &c) in candidates.iter().take(max_k).enumerate() {
        let frame = frames
            .get(c)
            .ok_or_else(|| Error::InvalidData(format!("candidate frame {c} outside {} frames", frames.len())))?;
        if config.matches(Subject::frame(c, frame), reference)? {
            first_hit = Some(pos);
            break;
        }
    }
    ks.iter()
        .map(|&k| {
            if k == 0 {
                return Err(Error::InvalidConfig("k must be at least 1".into()));
            }
            Ok(u8::from(first_hit.is_some_and(|p| p < k)))
        })
        .collect()
}

/// One line of a corpus manifest (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub source: PathBuf,
    #[serde(default)]
    pub source_kind: Option<SourceKind>,
    pub gt_frame_index: usize,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub gt_image: Option<PathBuf>,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
    #[serde(default)]
    pub fps_num: Option<u32>,
    #[serde(default)]
    pub fps_den: Option<u32>,
}

/// Reads a JSON-lines manifest; relative paths are taken relative to the manifest.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ManifestError(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::ManifestError(format!("{} line {}: {e}", path.display(), n + 1)))?;
        if entry.source.is_relative() {
            entry.source = base.join(&entry.source);
        }
        if let Some(img) = entry.gt_image.as_mut().filter(|p| p.is_relative()) {
            *img = base.join(&*img);
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(entries)
}

pub fn write_manifest(out: impl Write, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = out;
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A decoded manifest video.
#[derive(Debug, Clone)]
pub struct LoadedVideo {
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub gt_image: Option<Frame>,
}

pub fn load_video(entry: &ManifestEntry, sources: &SourceRegistry) -> Result<LoadedVideo> {
    if !entry.source.exists() {
        return Err(Error::ManifestError(format!("{}: missing source {}", entry.id, entry.source.display())));
    }
    let kind = entry.source_kind.unwrap_or_else(|| guess_source_kind(&entry.source));
    let options = SourceOptions {
        path: entry.source.clone(),
        width: entry.width,
        height: entry.height,
        fps_num: entry.fps_num,
        fps_den: entry.fps_den,
    };
    let mut source = sources.open(kind.name(), &options)?;
    let frames = read_all(source.as_mut())?;
    if frames.is_empty() {
        return Err(Error::ManifestError(format!("{}: no frames", entry.id)));
    }
    if entry.gt_frame_index >= frames.len() {
        return Err(Error::ManifestError(format!(
            "{}: gt_frame_index {} outside {} frames",
            entry.id,
            entry.gt_frame_index,
            frames.len()
        )));
    }
    let gt_image = match &entry.gt_image {
        Some(p) => Some(load_image(p, entry.gt_frame_index, 0.0).map_err(|e| Error::ManifestError(format!("{}: {e}", entry.id)))?),
        None => None,
    };
    Ok(LoadedVideo {
        frames,
        fps: source.info().fps(),
        gt_image,
    })
}

/// P@k of one video under one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoOutcome {
    pub id: String,
    pub category: Option<String>,
    pub hits: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub k: usize,
    pub mean_p_at_k: f64,
    pub n_videos: usize,
    pub category: Option<String>,
}

/// Runs `method` on one video and scores its ranking.
pub fn evaluate_video(
    frames: &[Frame],
    fps: f64,
    gt: GroundTruth,
    method: &dyn ThumbnailMethod,
    ks: &[usize],
    config: &MatchConfig,
    seed: u64,
) -> Result<Vec<u8>> {
    let max_k = ks.iter().copied().max().unwrap_or(1);
    let ranked = method.rank(frames, fps, max_k, seed)?;
    let candidates: Vec<usize> = ranked.iter().map(|r| r.frame_index).collect();
    precision_at_ks(&candidates, frames, gt, ks, config)
}

/// Mean P@k overall and per category. Sums are over per-video hits, so the order of
/// `outcomes` does not matter.
pub fn aggregate(method: &str, ks: &[usize], outcomes: &[VideoOutcome]) -> Vec<ResultRow> {
    let mut groups: BTreeMap<Option<&str>, Vec<&VideoOutcome>> = BTreeMap::new();
    groups.insert(None, outcomes.iter().collect());
    for o in outcomes {
        if let Some(c) = &o.category {
            groups.entry(Some(c.as_str())).or_default().push(o);
        }
    }
    let mut rows = Vec::new();
    for (category, members) in groups {
        for (j, &k) in ks.iter().enumerate() {
            let hits: usize = members.iter().map(|o| o.hits[j] as usize).sum();
            rows.push(ResultRow {
                method: method.to_string(),
                k,
                mean_p_at_k: if members.is_empty() { 0.0 } else { hits as f64 / members.len() as f64 },
                n_videos: members.len(),
                category: category.map(str::to_string),
            });
        }
    }
    rows
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidConfig("ks must be a non-empty list of values >= 1".into()));
    }
    Ok(())
}

/// Evaluates `method` on every manifest video in parallel; video `i` runs with seed
/// `derive(seed, i)`.
pub fn mean_precision_at_k(
    entries: &[ManifestEntry],
    sources: &SourceRegistry,
    method: &dyn ThumbnailMethod,
    ks: &[usize],
    config: &MatchConfig,
    seed: u64,
) -> Result<(Vec<ResultRow>, Vec<VideoOutcome>)> {
    check_ks(ks)?;
    config.validate()?;
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let outcomes: Vec<VideoOutcome> = entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let video = load_video(entry, sources)?;
            let gt = GroundTruth {
                frame_index: Some(entry.gt_frame_index),
                image: video.gt_image.as_ref(),
            };
            let hits = evaluate_video(&video.frames, video.fps, gt, method, ks, config, seeding::derive(seed, i as u64))?;
            Ok(VideoOutcome {
                id: entry.id.clone(),
                category: entry.category.clone(),
                hits,
            })
        })
        .collect::<Result<_>>()?;
    Ok((aggregate(method.name(), ks, &outcomes), outcomes))
}

/// In-memory variant of [`mean_precision_at_k`] over `(frames, gt index, category)`.
pub fn mean_precision_at_k_frames(
    videos: &[(Vec<Frame>, usize, Option<String>)],
    fps: f64,
    method: &dyn ThumbnailMethod,
    ks: &[usize],
    config: &MatchConfig,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    check_ks(ks)?;
    config.validate()?;
    if videos.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let outcomes: Vec<VideoOutcome> = videos
        .par_iter()
        .enumerate()
        .map(|(i, (frames, gt, category))| {
            let gt = GroundTruth {
                frame_index: Some(*gt),
                image: None,
            };
            Ok(VideoOutcome {
                id: i.to_string(),
                category: category.clone(),
                hits: evaluate_video(frames, fps, gt, method, ks, config, seeding::derive(seed, i as u64))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(method.name(), ks, &outcomes))
}

/// CSV with columns `method,k,mean_p_at_k,n_videos`, plus `category` when any row has one.
pub fn write_results_csv(out: impl Write, rows: &[ResultRow]) -> Result<()> {
    let with_category = rows.iter().any(|r| r.category.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method", "k", "mean_p_at_k", "n_videos"];
    if with_category {
        header.push("category");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.method.clone(), r.k.to_string(), format!("{:.6}", r.mean_p_at_k), r.n_videos.to_string()];
        if with_category {
            rec.push(r.category.clone().unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
