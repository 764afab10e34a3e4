//! Packed RGB24 pipe, frame-major, dimensions and rate supplied by the caller.

use std::fs::File;
use std::io::{self, BufReader, Read};

use super::y4m::read_fully;
use super::{Colorspace, Frame, FrameSource, SourceKind, SourceOptions, StreamInfo};
use crate::error::{Error, Result};

pub struct RawRgbSource<R> {
    reader: R,
    info: StreamInfo,
    next_index: usize,
    buf: Vec<u8>,
}

impl<R: Read + Send> RawRgbSource<R> {
    pub fn new(reader: R, width: usize, height: usize, fps_num: u32, fps_den: u32) -> Result<Self> {
        let info = StreamInfo {
            width,
            height,
            fps_num,
            fps_den,
            colorspace: Colorspace::Rgb24,
            source: SourceKind::Raw,
        };
        info.validate()?;
        Ok(Self {
            reader,
            info,
            next_index: 0,
            buf: vec![0; width * height * 3],
        })
    }
}

impl<R: Read + Send> FrameSource for RawRgbSource<R> {
    fn info(&self) -> &StreamInfo {
        &self.info
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        let got = read_fully(&mut self.reader, &mut self.buf)?;
        if got == 0 {
            return Ok(None);
        }
        if got < self.buf.len() {
            return Err(Error::TruncatedFrame {
                index,
                expected: self.buf.len(),
                got,
            });
        }
        self.next_index += 1;
        let frame = Frame::from_rgb8(index, self.info.timestamp(index), self.info.width, self.info.height, &self.buf)?;
        Ok(Some(frame))
    }
}

pub(super) fn open(options: &SourceOptions) -> Result<Box<dyn FrameSource>> {
    let (Some(width), Some(height), Some(fps_num)) = (options.width, options.height, options.fps_num) else {
        return Err(Error::InvalidConfig(
            "raw RGB input requires --width, --height and --fps".into(),
        ));
    };
    let fps_den = options.fps_den.unwrap_or(1);
    let reader: Box<dyn Read + Send> = if options.path.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(&options.path)?)
    };
    Ok(Box::new(RawRgbSource::new(BufReader::new(reader), width, height, fps_num, fps_den)?))
}
