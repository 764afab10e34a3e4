//! Small image kernels shared by the filter, descriptor and aesthetic stages.

use crate::frame_io::GrayFrame;

/// Finite-difference gradients: central differences in the interior, one-sided at the
/// borders (so a linear ramp has the same slope everywhere).
pub fn gradients(gray: &GrayFrame) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (gray.width(), gray.height());
    let d = gray.data();
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if w < 2 {
                0.0
            } else if x == 0 {
                d[i + 1] - d[i]
            } else if x == w - 1 {
                d[i] - d[i - 1]
            } else {
                (d[i + 1] - d[i - 1]) * 0.5
            };
            gy[i] = if h < 2 {
                0.0
            } else if y == 0 {
                d[i + w] - d[i]
            } else if y == h - 1 {
                d[i] - d[i - w]
            } else {
                (d[i + w] - d[i - w]) * 0.5
            };
        }
    }
    (gx, gy)
}

pub fn gradient_magnitude(gray: &GrayFrame) -> Vec<f32> {
    let (gx, gy) = gradients(gray);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
}

#[inline]
fn clamped(gray: &GrayFrame, x: isize, y: isize) -> f32 {
    let x = x.clamp(0, gray.width() as isize - 1) as usize;
    let y = y.clamp(0, gray.height() as isize - 1) as usize;
    gray.get(x, y)
}

/// Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(gray: &GrayFrame) -> Vec<f32> {
    let (w, h) = (gray.width() as isize, gray.height() as isize);
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| clamped(gray, x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out.push(gx.hypot(gy));
        }
    }
    out
}

/// Square box filter of the given radius with replicated borders.
pub fn box_blur(gray: &GrayFrame, radius: usize) -> GrayFrame {
    let r = radius as isize;
    let norm = ((2 * r + 1) * (2 * r + 1)) as f32;
    let mut out = GrayFrame::from_fn(gray.width(), gray.height(), |x, y| {
        let mut acc = 0.0f32;
        for dy in -r..=r {
            for dx in -r..=r {
                acc += clamped(gray, x as isize + dx, y as isize + dy);
            }
        }
        acc / norm
    });
    out.index = gray.index;
    out
}

/// Binary dilation with a `(2r+1) x (2r+1)` square structuring element.
pub fn dilate(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    let mut horiz = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(width - 1);
                horiz[y * width + lo..=y * width + hi].fill(true);
            }
        }
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            if horiz[y * width + x] {
                for yy in lo..=hi {
                    out[yy * width + x] = true;
                }
            }
        }
    }
    out
}

/// Per-output-sample `(source index, weight)` lists for area resampling along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let start = o as f64 * scale;
            let end = start + scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            let mut taps = Vec::new();
            for s in first..last {
                let overlap = (end.min(s as f64 + 1.0) - start.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((s, overlap / scale));
                }
            }
            taps
        })
        .collect()
}

/// Area-averaging resample of a single channel plane to `dst_w x dst_h`.
pub fn resample_plane(src: &[f32], width: usize, height: usize, dst_w: usize, dst_h: usize) -> Vec<f64> {
    let wx = area_weights(width, dst_w);
    let wy = area_weights(height, dst_h);
    let mut tmp = vec![0.0f64; height * dst_w];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for (ox, taps) in wx.iter().enumerate() {
            tmp[y * dst_w + ox] = taps.iter().map(|&(s, w)| row[s] as f64 * w).sum();
        }
    }
    let mut out = vec![0.0f64; dst_w * dst_h];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..dst_w {
            out[oy * dst_w + ox] = taps.iter().map(|&(s, w)| tmp[s * dst_w + ox] * w).sum();
        }
    }
    out
}

pub fn resample(gray: &GrayFrame, dst_w: usize, dst_h: usize) -> Vec<f64> {
    resample_plane(gray.data(), gray.width(), gray.height(), dst_w, dst_h)
}

/// Splits `len` into two halves; an odd remainder goes to the second half.
pub fn halves(len: usize) -> [(usize, usize); 2] {
    let mid = len / 2;
    [(0, mid), (mid, len)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_gradient_is_uniform() {
        let g = GrayFrame::from_fn(9, 4, |x, _| x as f32 / 8.0);
        let (gx, gy) = gradients(&g);
        assert!(gx.iter().all(|v| (v - 0.125).abs() < 1e-6));
        assert!(gy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dilation_grows_a_point_into_a_square() {
        let mut mask = vec![false; 49];
        mask[3 * 7 + 3] = true;
        let d = dilate(&mask, 7, 7, 2);
        assert_eq!(d.iter().filter(|&&b| b).count(), 25);
        assert!(!d[0] && d[7 + 1]);
    }

    #[test]
    fn resample_preserves_mean_and_constants() {
        let g = GrayFrame::from_fn(13, 7, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0);
        for (w, h) in [(4, 3), (20, 9), (13, 7)] {
            let r = resample(&g, w, h);
            let mean: f64 = r.iter().sum::<f64>() / r.len() as f64;
            assert!((mean - g.mean()).abs() < 1e-6, "{w}x{h}");
        }
        let c = GrayFrame::from_fn(5, 5, |_, _| 0.25);
        assert!(resample(&c, 64, 64).iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn sobel_of_constant_is_zero() {
        let c = GrayFrame::from_fn(6, 6, |_, _| 0.7);
        assert!(sobel_magnitude(&c).iter().all(|&v| v == 0.0));
    }
}
