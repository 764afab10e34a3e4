//! Composition features: spectral-residual saliency on a 3x3 grid, spectral uniqueness
//! and HOG left/right symmetry.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frame_io::GrayFrame;
use crate::imageops;

/// Side of the square working resolution for the spectral features.
pub const CANONICAL: usize = 64;
pub const SALIENCY_SIGMA: f64 = 8.0;
/// Spectrum bins below this fraction of the peak amplitude hold only rounding or 8-bit
/// quantization noise (around 1e-9 and 3e-5 of the peak); their phase is meaningless, so
/// they are left out of the saliency reconstruction. Natural images keep roughly 2e-3 of
/// the peak even at the highest frequency.
const RELATIVE_FLOOR: f64 = 1e-4;
pub const GRID: usize = 3;
pub const HOG_BINS: usize = 9;
pub const HOG_CELL: usize = 8;

pub(crate) fn fft2(data: Vec<Complex64>, n: usize, inverse: bool) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut rows = data;
    fft.process(&mut rows);
    let mut cols: Vec<Complex64> = (0..n * n).map(|i| rows[(i % n) * n + i / n]).collect();
    fft.process(&mut cols);
    (0..n * n).map(|i| cols[(i % n) * n + i / n]).collect()
}

fn canonical_spectrum(gray: &GrayFrame) -> Vec<Complex64> {
    let small = imageops::resample(gray, CANONICAL, CANONICAL);
    fft2(small.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), CANONICAL, false)
}

/// Saliency values in `[0, 1]` at the frame's resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable convolution with replicated borders.
fn smooth(data: &[f64], n: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            tmp[y * n + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * data[y * n + clamp(x as isize + k as isize - r)])
                .sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(y as isize + k as isize - r) * n + x])
                .sum();
        }
    }
    out
}

/// Spectral residual saliency: the log-amplitude spectrum minus its 3x3 local average
/// (wrapping around, as the spectrum is periodic), recombined with the phase, inverted,
/// squared, Gaussian-smoothed and min-max normalized. A frame with no energy outside DC
/// yields an all-zero map.
///
/// Bins whose amplitude is below `RELATIVE_FLOOR` of the peak are clamped to the floor in
/// the log spectrum and contribute nothing to the reconstruction.
pub fn spectral_saliency(gray: &GrayFrame) -> Result<SaliencyMap> {
    gray.require_min_size(8, 8)?;
    let (w, h) = (gray.width(), gray.height());
    let n = CANONICAL;
    let zero = SaliencyMap {
        width: w,
        height: h,
        data: vec![0.0; w * h],
    };
    let spectrum = canonical_spectrum(gray);
    let ac: f64 = spectrum[1..].iter().map(|c| c.norm()).sum();
    if ac <= 1e-9 {
        return Ok(zero);
    }
    let floor = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max) * RELATIVE_FLOOR;
    let log_amp: Vec<f64> = spectrum.iter().map(|c| c.norm().max(floor).ln()).collect();
    let wrap = |i: isize| i.rem_euclid(n as isize) as usize;
    let mut residual_spectrum = Vec::with_capacity(n * n);
    for v in 0..n {
        for u in 0..n {
            let mut avg = 0.0;
            for dv in -1..=1 {
                for du in -1..=1 {
                    avg += log_amp[wrap(v as isize + dv) * n + wrap(u as isize + du)];
                }
            }
            let bin = spectrum[v * n + u];
            if bin.norm() <= floor {
                residual_spectrum.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let residual = log_amp[v * n + u] - avg / 9.0;
            residual_spectrum.push(Complex64::from_polar(residual.exp(), bin.arg()));
        }
    }
    let back = fft2(residual_spectrum, n, true);
    let power: Vec<f64> = back.iter().map(|c| c.norm_sqr()).collect();
    let smoothed = smooth(&power, n, &gaussian_kernel(SALIENCY_SIGMA));
    let (lo, hi) = smoothed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi - lo > 1e-12) {
        return Ok(zero);
    }
    let normalized: Vec<f32> = smoothed.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect();
    let data = imageops::resample_plane(&normalized, n, n, w, h)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(SaliencyMap { width: w, height: h, data })
}

/// Mean saliency over each cell of a 3x3 grid, row-major.
pub fn object_presence(map: &SaliencyMap) -> [f64; GRID * GRID] {
    let cuts = |len: usize| -> Vec<usize> { (0..=GRID).map(|i| i * len / GRID).collect() };
    let (xs, ys) = (cuts(map.width), cuts(map.height));
    let mut out = [0.0; GRID * GRID];
    for gy in 0..GRID {
        for gx in 0..GRID {
            let mut sum = 0.0;
            let mut count = 0usize;
            for y in ys[gy]..ys[gy + 1] {
                for x in xs[gx]..xs[gx + 1] {
                    sum += map.data[y * map.width + x];
                    count += 1;
                }
            }
            out[gy * GRID + gx] = if count > 0 { sum / count as f64 } else { 0.0 };
        }
    }
    out
}

/// Mean `ln(1 + |F|)` amplitude spectrum at the canonical resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPrior {
    pub size: usize,
    pub log_amplitude: Vec<f64>,
}

pub fn log_spectrum(gray: &GrayFrame) -> Vec<f64> {
    canonical_spectrum(gray).iter().map(|c| c.norm().ln_1p()).collect()
}

/// Radial frequency of bin `(u, v)` in cycles per canonical frame.
fn radial_frequency(u: usize, v: usize, n: usize) -> f64 {
    let fu = u.min(n - u) as f64;
    let fv = v.min(n - v) as f64;
    fu.hypot(fv)
}

impl SpectrumPrior {
    /// Radially symmetric `1/f` amplitude model of a mid-gray image with intensity
    /// standard deviation 0.2.
    pub fn one_over_f() -> Self {
        let n = CANONICAL;
        let pixels = (n * n) as f64;
        let inv_sq: f64 = (0..n * n)
            .skip(1)
            .map(|i| radial_frequency(i % n, i / n, n).powi(-2))
            .sum();
        let scale = pixels * 0.2 / inv_sq.sqrt();
        let log_amplitude = (0..n * n)
            .map(|i| {
                let amplitude = if i == 0 {
                    pixels * 0.5
                } else {
                    scale / radial_frequency(i % n, i / n, n)
                };
                amplitude.ln_1p()
            })
            .collect();
        Self { size: n, log_amplitude }
    }
}

impl Default for SpectrumPrior {
    fn default() -> Self {
        Self::one_over_f()
    }
}

pub fn build_spectrum_prior<'a>(frames: impl IntoIterator<Item = &'a GrayFrame>) -> Result<SpectrumPrior> {
    let mut sum = vec![0.0f64; CANONICAL * CANONICAL];
    let mut count = 0usize;
    for f in frames {
        for (s, v) in sum.iter_mut().zip(log_spectrum(f)) {
            *s += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(SpectrumPrior {
        size: CANONICAL,
        log_amplitude: sum.into_iter().map(|s| s / count as f64).collect(),
    })
}

/// Euclidean distance between the frame's log-amplitude spectrum and the prior.
pub fn uniqueness(gray: &GrayFrame, prior: &SpectrumPrior) -> f64 {
    log_spectrum(gray)
        .iter()
        .zip(&prior.log_amplitude)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Histogram of oriented gradients: unsigned orientation, 8x8 cells, 2x2-cell blocks
/// (fewer when the image holds fewer cells) with stride one, each block L2-normalized.
pub fn hog(gray: &GrayFrame) -> Vec<f64> {
    let (w, h) = (gray.width(), gray.height());
    let (cells_x, cells_y) = (w / HOG_CELL, h / HOG_CELL);
    let (gx, gy) = imageops::gradients(gray);
    let mut cells = vec![[0.0f64; HOG_BINS]; cells_x * cells_y];
    for y in 0..cells_y * HOG_CELL {
        for x in 0..cells_x * HOG_CELL {
            let i = y * w + x;
            let m = (gx[i] as f64).hypot(gy[i] as f64);
            if m == 0.0 {
                continue;
            }
            let theta = (gy[i] as f64).atan2(gx[i] as f64).rem_euclid(std::f64::consts::PI);
            let b = ((theta / std::f64::consts::PI * HOG_BINS as f64) as usize).min(HOG_BINS - 1);
            cells[(y / HOG_CELL) * cells_x + x / HOG_CELL][b] += m;
        }
    }
    let (bw, bh) = (cells_x.min(2), cells_y.min(2));
    let mut out = Vec::new();
    for by in 0..=cells_y.saturating_sub(bh) {
        for bx in 0..=cells_x.saturating_sub(bw) {
            let start = out.len();
            for cy in by..by + bh {
                for cx in bx..bx + bw {
                    out.extend_from_slice(&cells[cy * cells_x + cx]);
                }
            }
            let norm = (out[start..].iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
            for v in &mut out[start..] {
                *v /= norm;
            }
        }
    }
    out
}

/// Distance between the HOG of the left half and the HOG of the mirrored right half.
pub fn symmetry(gray: &GrayFrame) -> Result<f64> {
    gray.require_min_size(16, HOG_CELL)?;
    let (w, h) = (gray.width(), gray.height());
    let half = w / 2;
    let left = GrayFrame::from_fn(half, h, |x, y| gray.get(x, y));
    let mirrored_right = GrayFrame::from_fn(half, h, |x, y| gray.get(w - 1 - x, y));
    Ok(hog(&left)
        .iter()
        .zip(hog(&mirrored_right))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}
