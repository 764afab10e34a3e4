//! Seeded synthetic videos and datasets with known answers.
//!
//! Scenes are built from a static texture: a flat background, a few large rectangles
//! (sparse, strong edges that make cuts visible to the edge change ratio) and
//! low-amplitude noise (fine detail that keeps the frame "sharp" without creating edge
//! pixels). Camera shake is simulated by shifting the texture by up to two pixels.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::frame_io::{Frame, GrayFrame};
use crate::imageops;

pub const FPS: f64 = 30.0;
/// Maximum per-axis shake, in pixels.
pub const SHAKE: usize = 2;
const NOISE: f32 = 0.07;

const PALETTE: [[f32; 3]; 8] = [
    [0.75, 0.20, 0.20],
    [0.20, 0.25, 0.75],
    [0.25, 0.65, 0.30],
    [0.70, 0.60, 0.25],
    [0.55, 0.30, 0.65],
    [0.30, 0.60, 0.65],
    [0.60, 0.45, 0.40],
    [0.45, 0.45, 0.50],
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    crate::seeding::rng(seed)
}

pub fn timestamp(index: usize) -> f64 {
    index as f64 / FPS
}

/// A static texture of signed offsets around a tint, padded for shake.
#[derive(Debug, Clone)]
pub struct Texture {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Texture {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = rng(seed ^ 0x7e57_u64);
        let (pw, ph) = (width + SHAKE, height + SHAKE);
        let mut values = vec![0.0f32; pw * ph];
        let rects = 3;
        for _ in 0..rects {
            let rw = rng.random_range(width / 5..=width * 2 / 5).max(2);
            let rh = rng.random_range(height / 5..=height * 2 / 5).max(2);
            let x0 = rng.random_range(0..pw - rw);
            let y0 = rng.random_range(0..ph - rh);
            let magnitude = rng.random_range(0.25f32..0.4);
            let level = if rng.random_bool(0.5) { magnitude } else { -magnitude };
            for y in y0..y0 + rh {
                values[y * pw + x0..y * pw + x0 + rw].fill(level);
            }
        }
        for v in values.iter_mut() {
            *v += rng.random_range(-NOISE..NOISE);
        }
        Self {
            width: pw,
            height: ph,
            values,
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Renders a `width x height` frame viewed at shake offset `(dx, dy)`.
    pub fn render(&self, index: usize, tint: [f32; 3], shift: (usize, usize)) -> Frame {
        let (w, h) = (self.width - SHAKE, self.height - SHAKE);
        Frame::from_fn(index, timestamp(index), w, h, |x, y| {
            let t = self.at(x + shift.0, y + shift.1);
            [tint[0] + t, tint[1] + t, tint[2] + t]
        })
    }
}

/// Minimum edge change ratio between consecutive scene textures of the cut fixtures.
pub const MIN_CUT_ECR: f64 = 0.65;

/// One texture per scene; each is re-drawn until its edges differ clearly from the
/// previous scene's, so every scene change is a visible cut.
pub fn scene_textures(scenes: usize, width: usize, height: usize, seed: u64) -> Vec<Texture> {
    let mut out: Vec<Texture> = Vec::with_capacity(scenes);
    for s in 0..scenes {
        let mut attempt = 0u64;
        loop {
            let tex = Texture::new(width, height, seed.wrapping_mul(1000).wrapping_add(s as u64).wrapping_add(attempt << 32));
            let distinct = out.last().is_none_or(|prev| {
                let a = prev.render(0, [0.5; 3], (0, 0)).to_gray();
                let b = tex.render(0, [0.5; 3], (0, 0)).to_gray();
                crate::quality_filter::edge_change_ratio(&a, &b, 0.1, 2).expect("same size") >= MIN_CUT_ECR
            });
            if distinct {
                out.push(tex);
                break;
            }
            attempt += 1;
        }
    }
    out
}

pub fn texture_gray(width: usize, height: usize, seed: u64) -> GrayFrame {
    Texture::new(width, height, seed)
        .render(0, [0.5; 3], (0, 0))
        .to_gray()
}

pub fn tint(scene: usize) -> [f32; 3] {
    PALETTE[scene % PALETTE.len()]
}

/// Scenes of identical frames separated by hard cuts.
pub fn cut_video(lengths: &[usize], width: usize, height: usize, seed: u64) -> Vec<Frame> {
    let mut frames = Vec::new();
    let textures = scene_textures(lengths.len(), width, height, seed);
    for (s, (&len, tex)) in lengths.iter().zip(&textures).enumerate() {
        for _ in 0..len {
            frames.push(tex.render(frames.len(), tint(s), (0, 0)));
        }
    }
    frames
}

/// Red frames then blue frames, each with its own textured overlay.
pub fn two_color_cut(n_red: usize, n_blue: usize) -> Vec<Frame> {
    let (w, h) = (48, 36);
    let textures = scene_textures(2, w, h, 101);
    let (red, blue) = (&textures[0], &textures[1]);
    (0..n_red + n_blue)
        .map(|i| {
            if i < n_red {
                red.render(i, [0.8, 0.15, 0.15], (0, 0))
            } else {
                blue.render(i, [0.15, 0.15, 0.8], (0, 0))
            }
        })
        .collect()
}

/// Shake offsets for a scene: consecutive offsets always differ, except that the frame
/// at `static_at` repeats its predecessor's offset (making it the only perfectly still
/// frame of the scene).
pub fn shake_offsets(len: usize, static_at: Option<usize>, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(len);
    for i in 0..len {
        let prev = out.last().copied();
        let offset = match (prev, static_at) {
            (Some(p), Some(s)) if s == i => p,
            _ => loop {
                let cand = (rng.random_range(0..=SHAKE), rng.random_range(0..=SHAKE));
                if Some(cand) != prev {
                    break cand;
                }
            },
        };
        out.push(offset);
    }
    out
}

/// One scene of a shaky video.
#[derive(Debug, Clone, Copy)]
pub struct ShakyScene {
    pub len: usize,
    /// Offset within the scene of the one perfectly still frame (must be >= 1).
    pub static_at: Option<usize>,
}

/// Hard cuts between shaky scenes. Returns the frames and the global index of each
/// scene's still frame.
pub fn shaky_video(scenes: &[ShakyScene], width: usize, height: usize, seed: u64) -> (Vec<Frame>, Vec<Option<usize>>) {
    let mut rng = rng(seed);
    let mut frames = Vec::new();
    let mut statics = Vec::new();
    let textures = scene_textures(scenes.len(), width, height, seed.wrapping_mul(7919));
    for (s, (scene, tex)) in scenes.iter().zip(&textures).enumerate() {
        let offsets = shake_offsets(scene.len, scene.static_at, &mut rng);
        statics.push(scene.static_at.map(|o| frames.len() + o));
        for offset in offsets {
            frames.push(tex.render(frames.len(), tint(s), offset));
        }
    }
    (frames, statics)
}

/// A clean multi-scene video with planted dark, blurry and uniform frames.
pub struct PlantedQualityVideo {
    pub frames: Vec<Frame>,
    pub dark: Vec<usize>,
    pub blurry: Vec<usize>,
    pub uniform: Vec<usize>,
}

pub fn planted_quality_video(n: usize, per_kind: usize, seed: u64) -> PlantedQualityVideo {
    let (w, h) = (48, 36);
    let mut rng = rng(seed);
    let tex = Texture::new(w, h, seed);
    let base = tint(seed as usize);
    let offsets = shake_offsets(n, None, &mut rng);
    let mut frames: Vec<Frame> = offsets
        .iter()
        .enumerate()
        .map(|(i, &o)| tex.render(i, base, o))
        .collect();

    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);
    let dark: Vec<usize> = slots[..per_kind].to_vec();
    let blurry: Vec<usize> = slots[per_kind..2 * per_kind].to_vec();
    let uniform: Vec<usize> = slots[2 * per_kind..3 * per_kind].to_vec();
    for &i in &dark {
        let f = &frames[i];
        frames[i] = Frame::from_fn(i, timestamp(i), w, h, |x, y| f.pixel(x, y).map(|c| c * 0.12));
    }
    for &i in &blurry {
        // blur until the frame sits well under the default sharpness threshold
        let limit = 0.5 * crate::quality_filter::FilterConfig::default().sharpness_min;
        let mut planes: Vec<GrayFrame> = (0..3).map(|c| GrayFrame::from_fn(w, h, |x, y| frames[i].pixel(x, y)[c])).collect();
        loop {
            planes = planes.iter().map(|p| imageops::box_blur(p, 3)).collect();
            let f = Frame::from_fn(i, timestamp(i), w, h, |x, y| [planes[0].get(x, y), planes[1].get(x, y), planes[2].get(x, y)]);
            let sharp = crate::quality_filter::sharpness_score(&f.to_gray()).expect("fixture frames are large enough");
            frames[i] = f;
            if sharp < limit {
                break;
            }
        }
    }
    for &i in &uniform {
        frames[i] = Frame::from_fn(i, timestamp(i), w, h, |_, _| base);
    }
    PlantedQualityVideo {
        frames,
        dark,
        blurry,
        uniform,
    }
}

/// Six shaky scenes of different lengths; the largest contains the only perfectly still
/// frame of the video. Returns the frames and that frame's index.
pub fn planted_pipeline_video(seed: u64) -> (Vec<Frame>, usize) {
    let mut rng = rng(seed ^ 0x5eed);
    let mut lengths = vec![80usize, 60, 50, 40, 40, 30];
    lengths[1..].shuffle(&mut rng);
    let largest_pos = rng.random_range(0..lengths.len());
    lengths.swap(0, largest_pos);
    let still_offset = rng.random_range(20..60);
    let scenes: Vec<ShakyScene> = lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| ShakyScene {
            len,
            static_at: (i == largest_pos).then_some(still_offset),
        })
        .collect();
    let (frames, statics) = shaky_video(&scenes, 64, 48, seed);
    (frames, statics[largest_pos].expect("largest scene has a still frame"))
}

/// Isotropic Gaussian blobs with centers on a scaled simplex-like layout, guaranteeing
/// pairwise center distance `separation`.
pub fn gaussian_blobs(
    k: usize,
    dim: usize,
    per_blob: usize,
    spread: f64,
    separation: f64,
    seed: u64,
) -> (Array2<f64>, Vec<usize>) {
    assert!(k <= dim, "centers are placed on coordinate axes");
    let mut rng = rng(seed);
    let normal = Normal::new(0.0, spread).expect("positive spread");
    let scale = separation / std::f64::consts::SQRT_2;
    let mut points = Array2::zeros((k * per_blob, dim));
    let mut labels = Vec::with_capacity(k * per_blob);
    for c in 0..k {
        for j in 0..per_blob {
            let row = c * per_blob + j;
            for d in 0..dim {
                let center = if d == c { scale } else { 0.0 };
                points[[row, d]] = center + normal.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    (points, labels)
}

/// Natural-image-like texture: random phases under a `1/f` amplitude spectrum, scaled to
/// mean 0.5 and standard deviation 0.15.
pub fn pink_noise(width: usize, height: usize, seed: u64) -> GrayFrame {
    use rustfft::num_complex::Complex64;
    let n = width.max(height).next_power_of_two();
    let mut rng = rng(seed ^ 0x1f);
    let spectrum: Vec<Complex64> = (0..n * n)
        .map(|i| {
            let (u, v) = (i % n, i / n);
            let f = (u.min(n - u) as f64).hypot(v.min(n - v) as f64);
            if f == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::from_polar(1.0 / f, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let field: Vec<f64> = crate::aesthetics::fft2(spectrum, n, true).iter().map(|c| c.re).collect();
    let crop: Vec<f64> = (0..width * height).map(|i| field[(i / width) * n + i % width]).collect();
    let mean = crop.iter().sum::<f64>() / crop.len() as f64;
    let std = (crop.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / crop.len() as f64).sqrt();
    GrayFrame::from_fn(width, height, |x, y| (0.5 + 0.15 * (crop[y * width + x] - mean) / std) as f32)
}

/// A video whose thumbnail is known.
#[derive(Debug, Clone)]
pub struct DesignatedVideo {
    pub frames: Vec<Frame>,
    pub thumbnail: usize,
}

/// A view of `tex` with its own shake, tint jitter and contrast gain, so no two frames
/// share feature values.
fn varied_frame(tex: &Texture, index: usize, base: [f32; 3], rng: &mut impl Rng) -> Frame {
    let tint = base.map(|c| c + rng.random_range(-0.15f32..0.15));
    let gain = rng.random_range(0.6f32..1.4);
    let shift = (rng.random_range(0..=SHAKE), rng.random_range(0..=SHAKE));
    let f = tex.render(index, tint, shift);
    Frame::from_fn(index, timestamp(index), f.width(), f.height(), |x, y| {
        let p = f.pixel(x, y);
        [0, 1, 2].map(|c| tint[c] + gain * (p[c] - tint[c]))
    })
}

fn blurred(frame: &Frame, radius: usize) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let planes: Vec<GrayFrame> = (0..3)
        .map(|c| imageops::box_blur(&GrayFrame::from_fn(w, h, |x, y| frame.pixel(x, y)[c]), radius))
        .collect();
    Frame::from_fn(frame.index, frame.timestamp, w, h, |x, y| [planes[0].get(x, y), planes[1].get(x, y), planes[2].get(x, y)])
}

fn designated_corpus(videos: usize, len: usize, seed: u64, blur_others: bool) -> Vec<DesignatedVideo> {
    (0..videos)
        .map(|v| {
            let vseed = crate::seeding::derive(seed, v as u64);
            let mut rng = rng(vseed);
            let tex = Texture::new(48, 36, vseed);
            let base = tint(rng.random_range(0..PALETTE.len()));
            let thumbnail = rng.random_range(0..len);
            let frames = (0..len)
                .map(|i| {
                    let f = varied_frame(&tex, i, base, &mut rng);
                    if blur_others && i != thumbnail {
                        blurred(&f, rng.random_range(1..=2))
                    } else {
                        f
                    }
                })
                .collect();
            DesignatedVideo { frames, thumbnail }
        })
        .collect()
}

/// Videos of varied views of one scene with a uniformly random thumbnail: no feature
/// says anything about which frame was picked.
pub fn null_corpus(videos: usize, len: usize, seed: u64) -> Vec<DesignatedVideo> {
    designated_corpus(videos, len, seed, false)
}

/// Like [`null_corpus`], but every frame except the thumbnail is blurred, so the
/// thumbnail is always the sharpest frame.
pub fn sharpness_corpus(videos: usize, len: usize, seed: u64) -> Vec<DesignatedVideo> {
    designated_corpus(videos, len, seed, true)
}

/// Regression data where the target is a smooth function of one feature and every other
/// feature is noise. Features are uniform in `[0, 1)`.
pub fn regression_harness(n: usize, dim: usize, informative: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let x = Array2::from_shape_fn((n, dim), |_| rng.random::<f64>());
    let y = (0..n).map(|i| x[[i, informative]]).collect();
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality_filter::{frame_quality, FilterConfig};

    #[test]
    fn clean_texture_passes_default_thresholds() {
        let config = FilterConfig::default();
        for seed in 0..20 {
            let f = Texture::new(48, 36, seed).render(0, tint(seed as usize), (1, 1));
            let q = frame_quality(&f).unwrap();
            assert!(config.passes(&q), "seed {seed}: {q:?}");
        }
    }

    #[test]
    fn planted_frames_fail_their_threshold() {
        let config = FilterConfig::default();
        let v = planted_quality_video(200, 5, 3);
        for &i in &v.dark {
            assert!(frame_quality(&v.frames[i]).unwrap().luminance < config.luminance_min);
        }
        for &i in &v.blurry {
            let q = frame_quality(&v.frames[i]).unwrap();
            assert!(q.sharpness < config.sharpness_min, "{q:?}");
            assert!(q.luminance >= config.luminance_min);
        }
        for &i in &v.uniform {
            assert!(frame_quality(&v.frames[i]).unwrap().uniformity > config.uniformity_max);
        }
    }

    #[test]
    fn shake_offsets_change_except_at_still_frame() {
        let mut r = rng(4);
        let offsets = shake_offsets(50, Some(17), &mut r);
        for i in 1..50 {
            assert_eq!(offsets[i] == offsets[i - 1], i == 17, "frame {i}");
        }
    }
}
