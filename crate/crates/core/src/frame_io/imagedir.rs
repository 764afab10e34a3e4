//! Directory of still images (PPM/PNM always, PNG via the `image` crate), one frame per
//! file, ordered by file name.

use std::path::{Path, PathBuf};

use super::{Colorspace, Frame, FrameSource, SourceKind, SourceOptions, StreamInfo};
use crate::error::{Error, Result};

const EXTENSIONS: [&str; 4] = ["ppm", "pnm", "png", "pgm"];

pub struct ImageDirSource {
    files: Vec<PathBuf>,
    info: StreamInfo,
    next_index: usize,
}

fn load_rgb(path: &Path) -> Result<image::RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads one image file as a frame.
pub fn load_image(path: &Path, index: usize, timestamp: f64) -> Result<Frame> {
    let img = load_rgb(path)?;
    Frame::from_rgb8(index, timestamp, img.width() as usize, img.height() as usize, img.as_raw())
}

impl ImageDirSource {
    pub fn new(dir: &Path, fps_num: u32, fps_den: u32) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        let (width, height) = match files.first() {
            Some(first) => {
                let img = load_rgb(first)?;
                (img.width() as usize, img.height() as usize)
            }
            None => return Err(Error::EmptyStream),
        };
        let info = StreamInfo {
            width,
            height,
            fps_num,
            fps_den,
            colorspace: Colorspace::Rgb24,
            source: SourceKind::ImageDir,
        };
        info.validate()?;
        Ok(Self {
            files,
            info,
            next_index: 0,
        })
    }
}

impl FrameSource for ImageDirSource {
    fn info(&self) -> &StreamInfo {
        &self.info
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        let Some(path) = self.files.get(index) else {
            return Ok(None);
        };
        let img = load_rgb(path)?;
        if img.width() as usize != self.info.width || img.height() as usize != self.info.height {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{}, stream is {}x{}",
                path.display(),
                img.width(),
                img.height(),
                self.info.width,
                self.info.height
            )));
        }
        self.next_index += 1;
        let frame = Frame::from_rgb8(index, self.info.timestamp(index), self.info.width, self.info.height, img.as_raw())?;
        Ok(Some(frame))
    }
}

pub(super) fn open(options: &SourceOptions) -> Result<Box<dyn FrameSource>> {
    let fps_num = options.fps_num.unwrap_or(30);
    let fps_den = options.fps_den.unwrap_or(1);
    Ok(Box::new(ImageDirSource::new(&options.path, fps_num, fps_den)?))
}
