//! Gray-level co-occurrence texture statistics.

use crate::error::Result;
use crate::frame_io::GrayFrame;

pub const GLCM_LEVELS: usize = 16;
/// Distance-1 neighbour offsets at 0, 45, 90 and 135 degrees.
const OFFSETS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlcmFeatures {
    pub entropy: f64,
    pub energy: f64,
    pub contrast: f64,
    pub homogeneity: f64,
}

impl GlcmFeatures {
    pub fn values(&self) -> [f64; 4] {
        [self.entropy, self.energy, self.contrast, self.homogeneity]
    }
}

pub fn quantize(v: f32, levels: usize) -> usize {
    ((v as f64 * levels as f64) as usize).min(levels - 1)
}

/// Symmetric co-occurrence probabilities accumulated over the four offsets.
pub fn glcm(gray: &GrayFrame) -> Result<[[f64; GLCM_LEVELS]; GLCM_LEVELS]> {
    gray.require_min_size(2, 2)?;
    let (w, h) = (gray.width() as isize, gray.height() as isize);
    let levels: Vec<usize> = gray.data().iter().map(|&v| quantize(v, GLCM_LEVELS)).collect();
    let mut counts = [[0u64; GLCM_LEVELS]; GLCM_LEVELS];
    for y in 0..h {
        for x in 0..w {
            let a = levels[(y * w + x) as usize];
            for (dx, dy) in OFFSETS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let b = levels[(ny * w + nx) as usize];
                counts[a][b] += 1;
                counts[b][a] += 1;
            }
        }
    }
    let total: u64 = counts.iter().flatten().sum();
    Ok(counts.map(|row| row.map(|c| c as f64 / total as f64)))
}

pub fn glcm_features(gray: &GrayFrame) -> Result<GlcmFeatures> {
    let p = glcm(gray)?;
    let mut f = GlcmFeatures {
        entropy: 0.0,
        energy: 0.0,
        contrast: 0.0,
        homogeneity: 0.0,
    };
    for (i, row) in p.iter().enumerate() {
        for (j, &pij) in row.iter().enumerate() {
            if pij == 0.0 {
                continue;
            }
            let d = i.abs_diff(j) as f64;
            f.entropy -= pij * pij.log2();
            f.energy += pij * pij;
            f.contrast += d * d * pij;
            f.homogeneity += pij / (1.0 + d);
        }
    }
    // -0.0 for a single-cell matrix
    f.entropy = f.entropy.max(0.0);
    Ok(f)
}
