//! Low-quality and transition frame filtering.
//!
//! Frames are dropped when they are dark (mean relative luminance), blurry (mean
//! finite-difference gradient magnitude) or uniform (mass of the top 5% intensity bins).
//! Shot boundaries are found with the edge change ratio between consecutive surviving
//! frames, and frames near each boundary are dropped as transition frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{Frame, GrayFrame, LUMA_WEIGHTS};
use crate::imageops;

pub const HISTOGRAM_BINS: usize = 256;
/// `ceil(0.05 * 256)`
pub const TOP_BINS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality {
    pub index: usize,
    pub luminance: f64,
    pub sharpness: f64,
    pub uniformity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub luminance_min: f64,
    pub sharpness_min: f64,
    pub uniformity_max: f64,
    pub ecr_threshold: f64,
    pub boundary_margin: usize,
    /// Gradient magnitude above which a pixel counts as an edge for the ECR.
    pub edge_threshold: f64,
    pub dilation_radius: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            luminance_min: 0.10,
            sharpness_min: 0.02,
            uniformity_max: 0.95,
            ecr_threshold: 0.5,
            boundary_margin: 3,
            edge_threshold: 0.1,
            dilation_radius: 2,
        }
    }
}

impl FilterConfig {
    /// Keeps every frame; shot boundaries still split shots.
    pub fn disabled(&self) -> Self {
        Self {
            luminance_min: 0.0,
            sharpness_min: 0.0,
            uniformity_max: 1.0,
            boundary_margin: 0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.luminance_min) || !unit(self.uniformity_max) || !unit(self.ecr_threshold) {
            return Err(Error::InvalidConfig(
                "luminance_min, uniformity_max and ecr_threshold must lie in [0,1]".into(),
            ));
        }
        if !(self.sharpness_min >= 0.0) || !(self.edge_threshold >= 0.0) {
            return Err(Error::InvalidConfig("sharpness_min and edge_threshold must be >= 0".into()));
        }
        Ok(())
    }

    pub fn passes(&self, q: &FrameQuality) -> bool {
        q.luminance >= self.luminance_min && q.sharpness >= self.sharpness_min && q.uniformity <= self.uniformity_max
    }
}

/// Kept frames and the contiguous shots they form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMask {
    pub keep: Vec<bool>,
    /// Inclusive `(start, end)` frame spans, sorted and disjoint.
    pub shots: Vec<(usize, usize)>,
}

impl FrameMask {
    pub fn all(n: usize) -> Self {
        Self {
            keep: vec![true; n],
            shots: if n == 0 { vec![] } else { vec![(0, n - 1)] },
        }
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| self.keep[i]).collect()
    }

    /// Rebuilds the keep vector from the shot spans.
    pub fn keep_from_shots(&self) -> Vec<bool> {
        let mut keep = vec![false; self.keep.len()];
        for &(s, e) in &self.shots {
            keep[s..=e].fill(true);
        }
        keep
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub qualities: Vec<FrameQuality>,
    /// ECR against the previous quality-passing frame; `None` for frames that failed a
    /// quality threshold and for the first passing frame.
    pub ecr: Vec<Option<f64>>,
    pub boundaries: Vec<usize>,
    pub mask: FrameMask,
}

pub fn luminance_score(frame: &Frame) -> f64 {
    // the weighted sum is linear, so weight the channel means
    let mut sums = [0.0f64; 3];
    for px in frame.pixels() {
        for (s, c) in sums.iter_mut().zip(px) {
            *s += c as f64;
        }
    }
    let n = frame.pixel_count() as f64;
    let [wr, wg, wb] = LUMA_WEIGHTS;
    (wr * (sums[0] / n) + wg * (sums[1] / n) + wb * (sums[2] / n)).clamp(0.0, 1.0)
}

pub fn sharpness_score(gray: &GrayFrame) -> Result<f64> {
    gray.require_min_size(3, 3)?;
    let mag = imageops::gradient_magnitude(gray);
    Ok(mag.iter().map(|&m| m as f64).sum::<f64>() / mag.len() as f64)
}

pub(crate) fn intensity_bin(v: f32) -> usize {
    ((v as f64 * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn uniformity_score(gray: &GrayFrame) -> f64 {
    let mut hist = [0usize; HISTOGRAM_BINS];
    for &v in gray.data() {
        hist[intensity_bin(v)] += 1;
    }
    hist.sort_unstable_by(|a, b| b.cmp(a));
    let top: usize = hist[..TOP_BINS].iter().sum();
    top as f64 / gray.data().len() as f64
}

pub fn frame_quality(frame: &Frame) -> Result<FrameQuality> {
    let gray = frame.to_gray();
    Ok(FrameQuality {
        index: frame.index,
        luminance: luminance_score(frame),
        sharpness: sharpness_score(&gray)?,
        uniformity: uniformity_score(&gray),
    })
}

fn edge_map(gray: &GrayFrame, threshold: f64) -> Vec<bool> {
    imageops::gradient_magnitude(gray)
        .into_iter()
        .map(|m| m as f64 > threshold)
        .collect()
}

/// Edge change ratio: the larger of the fractions of entering and exiting edge pixels,
/// where an edge pixel "survives" if the other frame has an edge within
/// `dilation_radius`. A frame without edges contributes a fraction of 0.
pub fn edge_change_ratio(prev: &GrayFrame, cur: &GrayFrame, edge_threshold: f64, dilation_radius: usize) -> Result<f64> {
    if !prev.same_shape(cur) {
        return Err(Error::DimensionMismatch(format!(
            "ECR of {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    let (w, h) = (cur.width(), cur.height());
    let e_prev = edge_map(prev, edge_threshold);
    let e_cur = edge_map(cur, edge_threshold);
    let d_prev = imageops::dilate(&e_prev, w, h, dilation_radius);
    let d_cur = imageops::dilate(&e_cur, w, h, dilation_radius);

    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let (n_prev, n_cur) = (count(&e_prev), count(&e_cur));
    let entering = e_cur.iter().zip(&d_prev).filter(|(&e, &d)| e && !d).count();
    let exiting = e_prev.iter().zip(&d_cur).filter(|(&e, &d)| e && !d).count();
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(frac(entering, n_cur).max(frac(exiting, n_prev)))
}

/// Turns a per-position ECR sequence (`ecr[0]` unused) into boundary positions: every
/// run of consecutive above-threshold positions becomes one event at its maximum.
pub fn boundaries_from_ecr(ecr: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    for (i, &v) in ecr.iter().enumerate().skip(1) {
        if v > threshold {
            run = match run {
                Some((best, bv)) if bv >= v => Some((best, bv)),
                _ => Some((i, v)),
            };
        } else if let Some((best, _)) = run.take() {
            out.push(best);
        }
    }
    if let Some((best, _)) = run {
        out.push(best);
    }
    out
}

/// Shot boundaries over a frame sequence; returned positions index into `grays`.
pub fn detect_shot_boundaries(grays: &[GrayFrame], config: &FilterConfig) -> Result<Vec<usize>> {
    let ecr = ecr_sequence(grays, config)?;
    Ok(boundaries_from_ecr(&ecr, config.ecr_threshold))
}

fn ecr_sequence(grays: &[GrayFrame], config: &FilterConfig) -> Result<Vec<f64>> {
    let mut ecr = vec![0.0; grays.len()];
    let tail: Vec<f64> = grays
        .par_windows(2)
        .map(|pair| edge_change_ratio(&pair[0], &pair[1], config.edge_threshold, config.dilation_radius))
        .collect::<Result<_>>()?;
    if grays.len() > 1 {
        ecr[1..].copy_from_slice(&tail);
    }
    Ok(ecr)
}

/// Scores every frame, detects boundaries among the frames that pass the quality
/// thresholds, and drops `boundary_margin` frames on each side of every boundary.
pub fn filter_frames(frames: &[Frame], config: &FilterConfig) -> Result<FilterReport> {
    config.validate()?;
    let qualities: Vec<FrameQuality> = frames.par_iter().map(frame_quality).collect::<Result<_>>()?;
    let passing: Vec<usize> = (0..frames.len()).filter(|&i| config.passes(&qualities[i])).collect();

    let pair_ecr: Vec<f64> = passing
        .par_windows(2)
        .map(|p| {
            edge_change_ratio(
                &frames[p[0]].to_gray(),
                &frames[p[1]].to_gray(),
                config.edge_threshold,
                config.dilation_radius,
            )
        })
        .collect::<Result<_>>()?;
    let mut ecr_by_position = vec![0.0; passing.len()];
    let mut ecr = vec![None; frames.len()];
    for (p, &v) in pair_ecr.iter().enumerate() {
        ecr_by_position[p + 1] = v;
        ecr[passing[p + 1]] = Some(v);
    }
    let boundaries: Vec<usize> = boundaries_from_ecr(&ecr_by_position, config.ecr_threshold)
        .into_iter()
        .map(|p| passing[p])
        .collect();

    let mut keep = vec![false; frames.len()];
    for &i in &passing {
        keep[i] = true;
    }
    // boundary b sits between frames b-1 and b
    for &b in &boundaries {
        let lo = b.saturating_sub(config.boundary_margin);
        let hi = (b + config.boundary_margin).min(frames.len());
        keep[lo..hi].fill(false);
    }

    let mut shots = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..frames.len() {
        let splits = boundaries.binary_search(&i).is_ok();
        match (keep[i], start) {
            (true, Some(s)) if splits => {
                shots.push((s, i - 1));
                start = Some(i);
            }
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                shots.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        shots.push((s, frames.len() - 1));
    }
    if shots.is_empty() {
        return Err(Error::AllFramesFiltered);
    }
    Ok(FilterReport {
        qualities,
        ecr,
        boundaries,
        mask: FrameMask { keep, shots },
    })
}
