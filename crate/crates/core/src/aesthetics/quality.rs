//! Basic image quality measures: contrast balance, exposure balance, JPEG blockiness and
//! Sobel sharpness.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frame_io::GrayFrame;
use crate::imageops;
use crate::quality_filter::{intensity_bin, HISTOGRAM_BINS};

/// Root-mean-square difference between the frame and its histogram-equalized version.
/// A single-level frame equalizes to itself.
pub fn contrast_balance(gray: &GrayFrame) -> f64 {
    let mut cdf = [0usize; HISTOGRAM_BINS];
    for &v in gray.data() {
        cdf[intensity_bin(v)] += 1;
    }
    for b in 1..HISTOGRAM_BINS {
        cdf[b] += cdf[b - 1];
    }
    let n = gray.data().len();
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if n == cdf_min {
        return 0.0;
    }
    let denom = (n - cdf_min) as f64;
    let sq: f64 = gray
        .data()
        .iter()
        .map(|&v| {
            let eq = (cdf[intensity_bin(v)] - cdf_min) as f64 / denom;
            (v as f64 - eq).powi(2)
        })
        .sum();
    (sq / n as f64).sqrt()
}

/// Absolute sample skewness of the intensities; 0 for a constant frame.
pub fn exposure_balance(gray: &GrayFrame) -> f64 {
    let data = gray.data();
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in data {
        let d = v as f64 - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let (m2, m3) = (m2 / n, m3 / n);
    if m2 < 1e-12 {
        return 0.0;
    }
    (m3 / m2.powf(1.5)).abs()
}

/// Constants of the blockiness/activity/zero-crossing quality model, fitted on 8-bit
/// intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JpegQualityParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Floor applied to B, A and Z so the power law stays finite on flat or fully blocky input.
    pub floor: f64,
}

impl Default for JpegQualityParams {
    fn default() -> Self {
        Self {
            alpha: -245.9,
            beta: 261.9,
            gamma1: -0.0240,
            gamma2: 0.0160,
            gamma3: 0.0064,
            floor: 1e-6,
        }
    }
}

/// Blockiness, activity and zero-crossing rate along one axis. `line(i)` yields the
/// `i`-th row (or column) of 8-bit intensities.
fn axis_features(lines: usize, len: usize, line: impl Fn(usize) -> Vec<f64>) -> (f64, f64, f64) {
    let blocks = len / 8;
    let (mut boundary, mut total, mut crossings) = (0.0, 0.0, 0usize);
    for i in 0..lines {
        let px = line(i);
        let d: Vec<f64> = px.windows(2).map(|p| p[1] - p[0]).collect();
        // boundaries sit after every 8th sample: d[7], d[15], ...
        for j in 1..blocks {
            boundary += d[8 * j - 1].abs();
        }
        total += d.iter().map(|v| v.abs()).sum::<f64>();
        crossings += d.windows(2).filter(|p| p[0] * p[1] < 0.0).count();
    }
    let b = boundary / (lines * (blocks.saturating_sub(1)).max(1)) as f64;
    let a = (8.0 * total / (lines * (len - 1)) as f64 - b) / 7.0;
    let z = crossings as f64 / (lines * (len - 2)) as f64;
    (b, a, z)
}

/// No-reference JPEG quality score from 8x8 block-boundary statistics. Higher is better.
pub fn jpeg_quality(gray: &GrayFrame, params: &JpegQualityParams) -> Result<f64> {
    gray.require_min_size(16, 16)?;
    let (w, h) = (gray.width(), gray.height());
    let at = |x: usize, y: usize| gray.get(x, y) as f64 * 255.0;
    let (bh, ah, zh) = axis_features(h, w, |y| (0..w).map(|x| at(x, y)).collect());
    let (bv, av, zv) = axis_features(w, h, |x| (0..h).map(|y| at(x, y)).collect());
    let b = ((bh + bv) / 2.0).max(params.floor);
    let a = ((ah + av) / 2.0).max(params.floor);
    let z = ((zh + zv) / 2.0).max(params.floor);
    Ok(params.alpha + params.beta * b.powf(params.gamma1) * a.powf(params.gamma2) * z.powf(params.gamma3))
}

/// Mean Sobel gradient magnitude.
pub fn sharpness_sobel(gray: &GrayFrame) -> Result<f64> {
    gray.require_min_size(3, 3)?;
    let m = imageops::sobel_magnitude(gray);
    Ok(m.iter().map(|&v| v as f64).sum::<f64>() / m.len() as f64)
}
