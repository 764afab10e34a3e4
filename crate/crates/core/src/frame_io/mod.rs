//! Frame ingestion and color-space conversion.
//!
//! Three sources are supported, each behind the [`FrameSource`] trait and
//! registered by name in [`SourceRegistry`]: YUV4MPEG2 streams (`y4m`), packed
//! RGB24 pipes (`raw`) and directories of still images (`imagedir`).

mod color;
mod imagedir;
mod raw;
mod y4m;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use color::{hsv_to_rgb, rgb_to_hsv, LUMA_WEIGHTS};
pub use imagedir::{load_image, ImageDirSource};
pub use raw::RawRgbSource;
pub use y4m::{parse_y4m_header, write_y4m, Y4mSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Colorspace {
    C420,
    C422,
    C444,
    Rgb24,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Y4m,
    Raw,
    ImageDir,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Y4m => "y4m",
            SourceKind::Raw => "raw",
            SourceKind::ImageDir => "imagedir",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub colorspace: Colorspace,
    pub source: SourceKind,
}

impl StreamInfo {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidData(format!(
                "stream dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(Error::InvalidData(format!(
                "frame rate must be positive, got {}:{}",
                self.fps_num, self.fps_den
            )));
        }
        Ok(())
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        index as f64 * self.fps_den as f64 / self.fps_num as f64
    }

    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }
}

/// One decoded RGB frame, channels normalized to `[0, 1]`, row-major `H x W x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    width: usize,
    height: usize,
    rgb: Vec<f32>,
}

impl Frame {
    pub fn new(index: usize, timestamp: f64, width: usize, height: usize, rgb: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidData("frame dimensions must be positive".into()));
        }
        if rgb.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "rgb buffer has {} values, expected {}",
                rgb.len(),
                width * height * 3
            )));
        }
        if let Some(bad) = rgb.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidData(format!("channel value {bad} outside [0,1]")));
        }
        Ok(Self {
            index,
            timestamp,
            width,
            height,
            rgb,
        })
    }

    /// Builds a frame from a per-pixel function returning `[r, g, b]`; values are clamped.
    pub fn from_fn(
        index: usize,
        timestamp: f64,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in f(x, y) {
                    rgb.push(c.clamp(0.0, 1.0));
                }
            }
        }
        Self {
            index,
            timestamp,
            width,
            height,
            rgb,
        }
    }

    pub fn from_rgb8(index: usize, timestamp: f64, width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "rgb24 buffer has {} bytes, expected {}",
                bytes.len(),
                width * height * 3
            )));
        }
        let rgb = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Frame::new(index, timestamp, width, height, rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn rgb(&self) -> &[f32] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.rgb[o], self.rgb[o + 1], self.rgb[o + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.rgb.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn with_index(mut self, index: usize, timestamp: f64) -> Self {
        self.index = index;
        self.timestamp = timestamp;
        self
    }

    /// Relative-luminance gray conversion, `0.2126 r + 0.7152 g + 0.0722 b`.
    pub fn to_gray(&self) -> GrayFrame {
        let data = self
            .pixels()
            .map(|[r, g, b]| color::luma(r, g, b))
            .collect();
        GrayFrame {
            index: self.index,
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn to_hsv(&self) -> HsvFrame {
        let n = self.pixel_count();
        let (mut h, mut s, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for [r, g, b] in self.pixels() {
            let (hh, ss, vv) = rgb_to_hsv(r as f64, g as f64, b as f64);
            h.push(hh as f32);
            s.push(ss as f32);
            v.push(vv as f32);
        }
        HsvFrame {
            index: self.index,
            width: self.width,
            height: self.height,
            h,
            s,
            v,
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    pub fn flip_horizontal(&self) -> Frame {
        Frame::from_fn(self.index, self.timestamp, self.width, self.height, |x, y| {
            self.pixel(self.width - 1 - x, y)
        })
    }

    /// Writes the frame as an 8-bit image; format follows the extension (`.ppm` or `.png`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Single-channel intensity image in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub index: usize,
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(index: usize, width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "gray buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            index: 0,
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &GrayFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn require_min_size(&self, min_width: usize, min_height: usize) -> Result<()> {
        if self.width < min_width || self.height < min_height {
            return Err(Error::FrameTooSmall {
                width: self.width,
                height: self.height,
                min_width,
                min_height,
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn flip_horizontal(&self) -> GrayFrame {
        let mut g = GrayFrame::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y));
        g.index = self.index;
        g
    }
}

/// Hexcone HSV planes; hue in `[0, 1)` with achromatic pixels at hue 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvFrame {
    pub index: usize,
    width: usize,
    height: usize,
    pub h: Vec<f32>,
    pub s: Vec<f32>,
    pub v: Vec<f32>,
}

impl HsvFrame {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn to_rgb(&self) -> Frame {
        Frame::from_fn(self.index, 0.0, self.width, self.height, |x, y| {
            let i = y * self.width + x;
            let (r, g, b) = hsv_to_rgb(self.h[i] as f64, self.s[i] as f64, self.v[i] as f64);
            [r as f32, g as f32, b as f32]
        })
    }
}

/// A stream of decoded frames with gapless indices starting at 0.
pub trait FrameSource: Send {
    fn info(&self) -> &StreamInfo;
    fn next_frame(&mut self) -> Result<Option<Frame>>;
}

/// Drains a source into memory.
pub fn read_all(source: &mut dyn FrameSource) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    while let Some(frame) = source.next_frame()? {
        frames.push(frame);
    }
    Ok(frames)
}

/// Options shared by every source opener. `path` of `-` reads standard input where the
/// source supports it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceOptions {
    pub path: PathBuf,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub fps_num: Option<u32>,
    pub fps_den: Option<u32>,
}

pub type SourceOpener = fn(&SourceOptions) -> Result<Box<dyn FrameSource>>;

/// Frame sources registered by name.
pub struct SourceRegistry {
    openers: BTreeMap<&'static str, SourceOpener>,
}

impl SourceRegistry {
    pub fn empty() -> Self {
        Self {
            openers: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, opener: SourceOpener) {
        self.openers.insert(name, opener);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.openers.keys().copied().collect()
    }

    pub fn open(&self, name: &str, options: &SourceOptions) -> Result<Box<dyn FrameSource>> {
        let opener = self.openers.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "frame source",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        opener(options)
    }
}

impl Default for SourceRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register("y4m", y4m::open);
        registry.register("raw", raw::open);
        registry.register("imagedir", imagedir::open);
        registry
    }
}

/// Guesses the source kind from a path: directories are image directories, `.y4m` files
/// are Y4M streams, anything else is a raw pipe.
pub fn guess_source_kind(path: &Path) -> SourceKind {
    if path.is_dir() {
        SourceKind::ImageDir
    } else if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
    {
        SourceKind::Y4m
    } else {
        SourceKind::Raw
    }
}
