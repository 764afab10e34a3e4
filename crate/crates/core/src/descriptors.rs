//! Color/edge pyramid descriptors used for subshot clustering, keyframe clustering and
//! near-duplicate detection.
//!
//! Layout per region (whole frame first, then the 2x2 quadrants row-major): 128-bin H,
//! S and V histograms, a 30-bin magnitude-weighted edge orientation histogram over
//! `[0, pi)` and a 30-bin edge magnitude histogram over `[0, sqrt 2]`. Every histogram is
//! L1-normalized on its own.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::frame_io::Frame;
use crate::imageops;

pub const HSV_BINS: usize = 128;
pub const EDGE_BINS: usize = 30;
pub const REGION_DIM: usize = 3 * HSV_BINS + 2 * EDGE_BINS;
pub const REGIONS: usize = 5;
pub const DESCRIPTOR_DIM: usize = REGION_DIM * REGIONS;
pub const EDGE_THRESHOLD: f32 = 0.05;
pub const MIN_SIZE: usize = 8;
pub const DUMP_MAGIC: &[u8; 8] = b"THDESC01";
/// Largest possible distance between two descriptors (25 L1-normalized histograms).
pub const MAX_DISTANCE: f64 = 7.0710678118654755; // sqrt(2 * 25)

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDescriptor {
    pub index: usize,
    pub vector: Vec<f32>,
}

/// `[x0, x1) x [y0, y1)` regions: whole frame then quadrants, odd remainders to the last.
pub fn pyramid_regions(width: usize, height: usize) -> [(usize, usize, usize, usize); REGIONS] {
    let [(x0, x1), (x2, x3)] = imageops::halves(width);
    let [(y0, y1), (y2, y3)] = imageops::halves(height);
    [
        (0, width, 0, height),
        (x0, x1, y0, y1),
        (x2, x3, y0, y1),
        (x0, x1, y2, y3),
        (x2, x3, y2, y3),
    ]
}

fn bin(value: f64, bins: usize) -> usize {
    ((value * bins as f64) as usize).min(bins - 1)
}

fn normalize_into(out: &mut Vec<f32>, hist: &[f64], fallback_uniform: bool) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        out.extend(hist.iter().map(|&v| (v / total) as f32));
    } else if fallback_uniform {
        out.extend(std::iter::repeat_n((1.0 / hist.len() as f64) as f32, hist.len()));
    } else {
        out.extend(std::iter::repeat_n(0.0f32, hist.len()));
    }
}

pub fn compute_descriptor(frame: &Frame) -> Result<FrameDescriptor> {
    let (w, h) = (frame.width(), frame.height());
    if w < MIN_SIZE || h < MIN_SIZE {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min_width: MIN_SIZE,
            min_height: MIN_SIZE,
        });
    }
    let hsv = frame.to_hsv();
    let (gx, gy) = imageops::gradients(&frame.to_gray());

    let mut vector = Vec::with_capacity(DESCRIPTOR_DIM);
    for (x0, x1, y0, y1) in pyramid_regions(w, h) {
        let mut hists = [[0.0f64; HSV_BINS]; 3];
        let mut orient = [0.0f64; EDGE_BINS];
        let mut magnitude = [0.0f64; EDGE_BINS];
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                hists[0][bin(hsv.h[i] as f64, HSV_BINS)] += 1.0;
                hists[1][bin(hsv.s[i] as f64, HSV_BINS)] += 1.0;
                hists[2][bin(hsv.v[i] as f64, HSV_BINS)] += 1.0;
                let m = gx[i].hypot(gy[i]);
                if m > EDGE_THRESHOLD {
                    let theta = (gy[i] as f64).atan2(gx[i] as f64).rem_euclid(PI);
                    orient[bin(theta / PI, EDGE_BINS)] += m as f64;
                    magnitude[bin(m as f64 / SQRT_2, EDGE_BINS)] += 1.0;
                }
            }
        }
        for hist in &hists {
            normalize_into(&mut vector, hist, false);
        }
        normalize_into(&mut vector, &orient, true);
        normalize_into(&mut vector, &magnitude, false);
    }
    debug_assert_eq!(vector.len(), DESCRIPTOR_DIM);
    Ok(FrameDescriptor {
        index: frame.index,
        vector,
    })
}

pub fn descriptor_distance(a: &FrameDescriptor, b: &FrameDescriptor) -> Result<f64> {
    if a.vector.len() != b.vector.len() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor lengths {} and {}",
            a.vector.len(),
            b.vector.len()
        )));
    }
    Ok(a.vector
        .iter()
        .zip(&b.vector)
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// Writes `THDESC01` followed by one record per descriptor: little-endian `u32` index and
/// `DESCRIPTOR_DIM` little-endian `f32` values.
pub fn write_descriptor_dump<'a>(mut out: impl Write, descriptors: impl IntoIterator<Item = &'a FrameDescriptor>) -> Result<()> {
    out.write_all(DUMP_MAGIC)?;
    for d in descriptors {
        if d.vector.len() != DESCRIPTOR_DIM {
            return Err(Error::DimensionMismatch(format!("descriptor has {} values", d.vector.len())));
        }
        let index = u32::try_from(d.index).map_err(|_| Error::InvalidData("frame index exceeds u32".into()))?;
        out.write_all(&index.to_le_bytes())?;
        for v in &d.vector {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_descriptor_dump(mut input: impl Read) -> Result<Vec<FrameDescriptor>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let body = bytes
        .strip_prefix(DUMP_MAGIC.as_slice())
        .ok_or_else(|| Error::InvalidData("missing THDESC01 magic".into()))?;
    let record = 4 + 4 * DESCRIPTOR_DIM;
    if body.len() % record != 0 {
        return Err(Error::InvalidData("descriptor dump has a partial record".into()));
    }
    Ok(body
        .chunks_exact(record)
        .map(|rec| FrameDescriptor {
            index: u32::from_le_bytes(rec[..4].try_into().unwrap()) as usize,
            vector: rec[4..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        })
        .collect())
}
