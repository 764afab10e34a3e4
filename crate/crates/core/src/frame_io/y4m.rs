//! YUV4MPEG2 reader (8-bit 4:2:0 / 4:2:2 / 4:4:4) and a 4:4:4 writer.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};

use super::{Colorspace, Frame, FrameSource, SourceKind, SourceOptions, StreamInfo};
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"YUV4MPEG2";
const MAX_LINE: usize = 4096;

/// Reads one `\n`-terminated line (without the newline). Returns `None` at a clean EOF and
/// `Err(partial)` when the stream ends mid-line or the line is too long.
fn read_line(reader: &mut impl BufRead) -> io::Result<Option<Result<Vec<u8>, Vec<u8>>>> {
    let mut line = Vec::new();
    let n = reader.take(MAX_LINE as u64).read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(None);
    }
    if line.last() != Some(&b'\n') {
        return Ok(Some(Err(line)));
    }
    line.pop();
    Ok(Some(Ok(line)))
}

fn parse_colorspace(token: &str) -> Result<Colorspace> {
    match token {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Colorspace::C420),
        "422" => Ok(Colorspace::C422),
        "444" => Ok(Colorspace::C444),
        other => Err(Error::UnsupportedColorspace(format!("C{other}"))),
    }
}

/// Parses the stream header, leaving `reader` positioned at the first `FRAME` marker.
pub fn parse_y4m_header(reader: &mut impl BufRead) -> Result<StreamInfo> {
    let line = match read_line(reader)? {
        Some(Ok(line)) => line,
        Some(Err(_)) => return Err(Error::MalformedHeader("unterminated header line".into())),
        None => return Err(Error::MalformedHeader("empty stream".into())),
    };
    if !line.starts_with(MAGIC) {
        return Err(Error::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let rest = std::str::from_utf8(&line[MAGIC.len()..])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;

    let (mut width, mut height, mut fps) = (None, None, None);
    let mut colorspace = Colorspace::C420;
    for token in rest.split_ascii_whitespace() {
        let (tag, value) = token.split_at(1);
        match tag {
            "W" => width = value.parse::<usize>().ok(),
            "H" => height = value.parse::<usize>().ok(),
            "F" => {
                fps = value.split_once(':').and_then(|(n, d)| {
                    Some((n.parse::<u32>().ok()?, d.parse::<u32>().ok()?))
                })
            }
            "C" => colorspace = parse_colorspace(value)?,
            // interlacing, aspect ratio and extensions do not affect decoding
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::MalformedHeader("missing or invalid W token".into()))?;
    let height = height.ok_or_else(|| Error::MalformedHeader("missing or invalid H token".into()))?;
    let (fps_num, fps_den) = fps.ok_or_else(|| Error::MalformedHeader("missing or invalid F token".into()))?;
    let info = StreamInfo {
        width,
        height,
        fps_num,
        fps_den,
        colorspace,
        source: SourceKind::Y4m,
    };
    info.validate()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(info)
}

fn chroma_dims(info: &StreamInfo) -> (usize, usize) {
    match info.colorspace {
        Colorspace::C420 => (info.width.div_ceil(2), info.height.div_ceil(2)),
        Colorspace::C422 => (info.width.div_ceil(2), info.height),
        Colorspace::C444 | Colorspace::Rgb24 => (info.width, info.height),
    }
}

/// Fills `buf` as far as the stream allows, returning the number of bytes read.
pub(super) fn read_fully(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match reader.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

pub struct Y4mSource<R> {
    reader: R,
    info: StreamInfo,
    next_index: usize,
    buf: Vec<u8>,
}

impl<R: BufRead + Send> Y4mSource<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let info = parse_y4m_header(&mut reader)?;
        let (cw, ch) = chroma_dims(&info);
        let frame_bytes = info.width * info.height + 2 * cw * ch;
        Ok(Self {
            reader,
            info,
            next_index: 0,
            buf: vec![0; frame_bytes],
        })
    }

    fn decode(&self) -> Result<Frame> {
        let (w, h) = (self.info.width, self.info.height);
        let (cw, ch) = chroma_dims(&self.info);
        let (luma, chroma) = self.buf.split_at(w * h);
        let (cb_plane, cr_plane) = chroma.split_at(cw * ch);
        let index = self.next_index;
        let frame = Frame::from_fn(index, self.info.timestamp(index), w, h, |x, y| {
            let ci = match self.info.colorspace {
                Colorspace::C420 => (y / 2) * cw + x / 2,
                Colorspace::C422 => y * cw + x / 2,
                Colorspace::C444 | Colorspace::Rgb24 => y * w + x,
            };
            let yy = luma[y * w + x] as f32 / 255.0;
            let cb = (cb_plane[ci] as f32 - 128.0) / 255.0;
            let cr = (cr_plane[ci] as f32 - 128.0) / 255.0;
            [
                yy + 1.402 * cr,
                yy - 0.344_136 * cb - 0.714_136 * cr,
                yy + 1.772 * cb,
            ]
        });
        Ok(frame)
    }
}

impl<R: BufRead + Send> FrameSource for Y4mSource<R> {
    fn info(&self) -> &StreamInfo {
        &self.info
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        match read_line(&mut self.reader)? {
            None => return Ok(None),
            Some(Ok(marker)) if marker.starts_with(b"FRAME") => {}
            Some(_) => return Err(Error::MalformedFrameMarker(index)),
        }
        let expected = self.buf.len();
        let got = read_fully(&mut self.reader, &mut self.buf)?;
        if got < expected {
            return Err(Error::TruncatedFrame {
                index,
                expected,
                got,
            });
        }
        let frame = self.decode()?;
        self.next_index += 1;
        Ok(Some(frame))
    }
}

pub(super) fn open(options: &SourceOptions) -> Result<Box<dyn FrameSource>> {
    let reader: Box<dyn Read + Send> = if options.path.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(&options.path)?)
    };
    Ok(Box::new(Y4mSource::new(BufReader::new(reader))?))
}

/// Encodes frames as an 8-bit C444 Y4M stream using full-range BT.601.
pub fn write_y4m(frames: &[Frame], fps_num: u32, fps_den: u32, mut out: impl Write) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::EmptyInput);
    };
    let (w, h) = (first.width(), first.height());
    writeln!(out, "YUV4MPEG2 W{w} H{h} F{fps_num}:{fps_den} Ip A1:1 C444")?;
    let to_byte = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    for frame in frames {
        if frame.width() != w || frame.height() != h {
            return Err(Error::DimensionMismatch("frames differ in size".into()));
        }
        let mut planes = vec![0u8; 3 * w * h];
        for (i, [r, g, b]) in frame.pixels().enumerate() {
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            let cb = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0 / 255.0;
            let cr = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0 / 255.0;
            planes[i] = to_byte(y);
            planes[w * h + i] = to_byte(cb);
            planes[2 * w * h + i] = to_byte(cr);
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(&planes)?;
    }
    Ok(())
}
