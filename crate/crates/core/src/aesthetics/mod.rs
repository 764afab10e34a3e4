//! The 52-value aesthetic feature vector, the stillness score and their CSV dump.

mod color;
mod composition;
mod quality;
mod texture;

pub use color::{contrast_feature, hsv_stats, HsvStats, PAD_WEIGHTS};
pub(crate) use composition::fft2;
pub use composition::{
    build_spectrum_prior, hog, log_spectrum, object_presence, spectral_saliency, symmetry, uniqueness, SaliencyMap,
    SpectrumPrior, CANONICAL,
};
pub use quality::{contrast_balance, exposure_balance, jpeg_quality, sharpness_sobel, JpegQualityParams};
pub use texture::{glcm, glcm_features, GlcmFeatures, GLCM_LEVELS};

use std::io::Write;
use std::sync::LazyLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame_io::{Frame, GrayFrame};

pub const AESTHETIC_DIM: usize = 52;
pub const ANALYSIS_DIM: usize = AESTHETIC_DIM + 1;
pub const MIN_SIZE: usize = 16;

/// Slot names and widths, in vector order.
pub const SLOTS: [(&str, usize); 14] = [
    ("contrast", 1),
    ("hsv_avg", 3),
    ("hsv_central", 3),
    ("hsv_hist", 20),
    ("hsv_contrast", 3),
    ("pad", 3),
    ("glcm", 4),
    ("contrast_balance", 1),
    ("exposure_balance", 1),
    ("jpeg_quality", 1),
    ("sharpness_sobel", 1),
    ("object_presence", 9),
    ("uniqueness", 1),
    ("symmetry", 1),
];

static FEATURE_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let hsv = ["h", "s", "v"];
    let mut names: Vec<String> = vec!["contrast".into()];
    names.extend(hsv.iter().map(|c| format!("hsv_avg_{c}")));
    names.extend(hsv.iter().map(|c| format!("hsv_central_{c}")));
    names.extend((0..12).map(|b| format!("hsv_hist_h{b}")));
    names.extend((0..3).map(|b| format!("hsv_hist_s{b}")));
    names.extend((0..5).map(|b| format!("hsv_hist_v{b}")));
    names.extend(hsv.iter().map(|c| format!("hsv_contrast_{c}")));
    names.extend(["pleasure", "arousal", "dominance"].map(String::from));
    names.extend(["glcm_entropy", "glcm_energy", "glcm_contrast", "glcm_homogeneity"].map(String::from));
    names.extend(["contrast_balance", "exposure_balance", "jpeg_quality", "sharpness_sobel"].map(String::from));
    for row in ["top", "middle", "bottom"] {
        for col in ["left", "center", "right"] {
            names.push(format!("object_{row}_{col}"));
        }
    }
    names.extend(["uniqueness", "symmetry", "stillness"].map(String::from));
    assert_eq!(names.len(), ANALYSIS_DIM);
    names
});

/// Column names of the 52 aesthetic values.
pub fn aesthetic_names() -> &'static [String] {
    &FEATURE_NAMES[..AESTHETIC_DIM]
}

/// Column names of the 53 analysis values (aesthetics then stillness).
pub fn analysis_names() -> &'static [String] {
    &FEATURE_NAMES
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| n == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AestheticVector {
    pub index: usize,
    values: Vec<f64>,
}

impl AestheticVector {
    pub fn new(index: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != AESTHETIC_DIM {
            return Err(Error::DimensionMismatch(format!(
                "aesthetic vector has {} values, expected {AESTHETIC_DIM}",
                values.len()
            )));
        }
        Ok(Self { index, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values of the named slot, e.g. `"glcm"`.
    pub fn slot(&self, name: &str) -> Option<&[f64]> {
        let mut start = 0;
        for (slot, width) in SLOTS {
            if slot == name {
                return Some(&self.values[start..start + width]);
            }
            start += width;
        }
        None
    }

    pub fn with_stillness(&self, stillness: f64) -> AnalysisVector {
        let mut values = self.values.clone();
        values.push(stillness);
        AnalysisVector {
            index: self.index,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisVector {
    pub index: usize,
    values: Vec<f64>,
}

impl AnalysisVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `1 / (1 + SSD / N)` between two same-sized frames.
pub fn stillness(prev: &GrayFrame, cur: &GrayFrame) -> Result<f64> {
    if !prev.same_shape(cur) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    let ssd: f64 = prev
        .data()
        .iter()
        .zip(cur.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(1.0 / (1.0 + ssd / prev.data().len() as f64))
}

/// Stillness of every frame against its predecessor in the slice. The first frame is
/// compared with its successor instead; a lone frame scores 1.
pub fn stillness_series(frames: &[GrayFrame]) -> Result<Vec<f64>> {
    let pairs: Vec<f64> = frames.par_windows(2).map(|p| stillness(&p[0], &p[1])).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(frames.len());
    match pairs.first() {
        Some(&first) => out.push(first),
        None if !frames.is_empty() => out.push(1.0),
        None => {}
    }
    out.extend(pairs);
    Ok(out)
}

/// Computes aesthetic vectors against a fixed spectrum prior and JPEG model.
#[derive(Debug, Clone, Default)]
pub struct AestheticExtractor {
    pub prior: SpectrumPrior,
    pub jpeg: JpegQualityParams,
}

impl AestheticExtractor {
    pub fn new(prior: SpectrumPrior, jpeg: JpegQualityParams) -> Self {
        Self { prior, jpeg }
    }

    pub fn compute(&self, frame: &Frame) -> Result<AestheticVector> {
        let (w, h) = (frame.width(), frame.height());
        if w < MIN_SIZE || h < MIN_SIZE {
            return Err(Error::FrameTooSmall {
                width: w,
                height: h,
                min_width: MIN_SIZE,
                min_height: MIN_SIZE,
            });
        }
        let gray = frame.to_gray();
        let mut values = Vec::with_capacity(AESTHETIC_DIM);
        values.push(contrast_feature(&gray));
        values.extend(hsv_stats(&frame.to_hsv()).values());
        values.extend(glcm_features(&gray)?.values());
        values.push(contrast_balance(&gray));
        values.push(exposure_balance(&gray));
        values.push(jpeg_quality(&gray, &self.jpeg)?);
        values.push(sharpness_sobel(&gray)?);
        values.extend(object_presence(&spectral_saliency(&gray)?));
        values.push(uniqueness(&gray, &self.prior));
        values.push(symmetry(&gray)?);
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite {} on frame {}",
                aesthetic_names()[i],
                frame.index
            )));
        }
        AestheticVector::new(frame.index, values)
    }

    /// Vectors for every frame, computed in parallel and returned in input order.
    pub fn compute_all(&self, frames: &[Frame]) -> Result<Vec<AestheticVector>> {
        frames.par_iter().map(|f| self.compute(f)).collect()
    }
}

pub fn compute_aesthetic_vector(frame: &Frame, prior: &SpectrumPrior) -> Result<AestheticVector> {
    AestheticExtractor::new(prior.clone(), JpegQualityParams::default()).compute(frame)
}

/// CSV with an `index` column, the 52 named feature columns and, when given, `stillness`.
pub fn write_aesthetics_csv(out: impl Write, vectors: &[AestheticVector], stillness: Option<&[f64]>) -> Result<()> {
    if let Some(s) = stillness {
        if s.len() != vectors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} stillness values for {} vectors",
                s.len(),
                vectors.len()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend(aesthetic_names().iter().cloned());
    if stillness.is_some() {
        header.push("stillness".into());
    }
    w.write_record(&header)?;
    for (i, v) in vectors.iter().enumerate() {
        let mut row = vec![v.index.to_string()];
        row.extend(v.values.iter().map(|x| x.to_string()));
        if let Some(s) = stillness {
            row.push(s[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
