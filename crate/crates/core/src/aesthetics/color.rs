//! Luminance contrast and HSV color statistics.

use crate::frame_io::{GrayFrame, HsvFrame};

pub const HUE_BINS: usize = 12;
pub const SATURATION_BINS: usize = 3;
pub const VALUE_BINS: usize = 5;

/// Pleasure, arousal and dominance as `(v, s)` weights on mean value and saturation.
pub const PAD_WEIGHTS: [(f64, f64); 3] = [(0.69, 0.22), (-0.31, 0.60), (-0.76, 0.32)];

/// `(max - min) / mean` of the luminance; 0 for an all-black frame.
pub fn contrast_feature(gray: &GrayFrame) -> f64 {
    let data = gray.data();
    let (lo, hi) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = gray.mean();
    if mean <= 0.0 {
        return 0.0;
    }
    (hi - lo) as f64 / mean
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsvStats {
    pub average: [f64; 3],
    pub central: [f64; 3],
    pub hue_hist: [f64; HUE_BINS],
    pub saturation_hist: [f64; SATURATION_BINS],
    pub value_hist: [f64; VALUE_BINS],
    /// Standard deviation of each channel histogram's bin masses.
    pub contrast: [f64; 3],
    pub pad: [f64; 3],
}

impl HsvStats {
    /// The 32 values in slot order: averages, central averages, histograms, contrasts, PAD.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(32);
        out.extend_from_slice(&self.average);
        out.extend_from_slice(&self.central);
        out.extend_from_slice(&self.hue_hist);
        out.extend_from_slice(&self.saturation_hist);
        out.extend_from_slice(&self.value_hist);
        out.extend_from_slice(&self.contrast);
        out.extend_from_slice(&self.pad);
        out
    }
}

fn channel_means(hsv: &HsvFrame, xs: std::ops::Range<usize>, ys: std::ops::Range<usize>) -> [f64; 3] {
    let w = hsv.width();
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for y in ys {
        for x in xs.clone() {
            let i = y * w + x;
            sums[0] += hsv.h[i] as f64;
            sums[1] += hsv.s[i] as f64;
            sums[2] += hsv.v[i] as f64;
            count += 1;
        }
    }
    sums.map(|s| s / count.max(1) as f64)
}

fn histogram<const B: usize>(values: &[f32]) -> [f64; B] {
    let mut hist = [0.0f64; B];
    for &v in values {
        hist[((v as f64 * B as f64) as usize).min(B - 1)] += 1.0;
    }
    let n = values.len().max(1) as f64;
    hist.map(|c| c / n)
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn hsv_stats(hsv: &HsvFrame) -> HsvStats {
    let (w, h) = (hsv.width(), hsv.height());
    let average = channel_means(hsv, 0..w, 0..h);
    let (cw, ch) = ((w / 2).max(1), (h / 2).max(1));
    let (cx, cy) = ((w - cw) / 2, (h - ch) / 2);
    let central = channel_means(hsv, cx..cx + cw, cy..cy + ch);
    let hue_hist = histogram::<HUE_BINS>(&hsv.h);
    let saturation_hist = histogram::<SATURATION_BINS>(&hsv.s);
    let value_hist = histogram::<VALUE_BINS>(&hsv.v);
    let contrast = [std_dev(&hue_hist), std_dev(&saturation_hist), std_dev(&value_hist)];
    let (s, v) = (average[1], average[2]);
    let pad = PAD_WEIGHTS.map(|(wv, ws)| wv * v + ws * s);
    HsvStats {
        average,
        central,
        hue_hist,
        saturation_hist,
        value_hist,
        contrast,
        pad,
    }
}
