//! Video ingestion from numbered PPM/PGM frame directories.
//!
//! Videos are read frame by frame through [`FrameSource`], so long sequences
//! never have to be resident in memory at once. [`FrameSequence`] is the
//! fully loaded variant for short clips and tests.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imgproc::Plane;

pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];
pub const DEFAULT_PATTERN: &str = "frame_%06d.ppm";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One frame at processing resolution: luminance plus HSV, all in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub gray: Plane,
    pub hsv: Vec<[f32; 3]>,
}

impl Frame {
    pub fn width(&self) -> usize {
        self.gray.width
    }

    pub fn height(&self) -> usize {
        self.gray.height
    }

    /// Builds a frame from interleaved RGB values in [0, 1].
    pub fn from_rgb(width: usize, height: usize, rgb: &[f32]) -> Self {
        assert_eq!(rgb.len(), width * height * 3, "rgb buffer size");
        let mut gray = Plane::new(width, height);
        let mut hsv = Vec::with_capacity(width * height);
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            let (r, g, b) = (px[0], px[1], px[2]);
            gray.data[i] = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b;
            hsv.push(rgb_to_hsv(r, g, b));
        }
        Self { gray, hsv }
    }

    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Self {
        let rgb: Vec<f32> = rgb.iter().map(|&v| v as f32 / 255.0).collect();
        Self::from_rgb(width, height, &rgb)
    }

    /// Builds a frame from a luminance plane; hue and saturation are zero.
    pub fn from_gray(gray: Plane) -> Self {
        let hsv = gray.data.iter().map(|&v| [0.0, 0.0, v]).collect();
        Self { gray, hsv }
    }

    #[inline]
    pub fn hsv_at(&self, x: usize, y: usize) -> [f32; 3] {
        self.hsv[y * self.gray.width + x]
    }
}

/// Hexcone RGB to HSV. Inputs are clamped to [0, 1]; hue is in [0, 1).
pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> [f32; 3] {
    let (r, g, b) = (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let value = max;
    let saturation = if max > 0.0 { chroma / max } else { 0.0 };
    if chroma <= 0.0 {
        return [0.0, saturation, value];
    }
    let sector = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let mut hue = sector / 6.0;
    if hue >= 1.0 {
        hue -= 1.0;
    }
    [hue, saturation, value]
}

/// Inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// Random access to the frames of one video.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    /// `(width, height)` of every frame.
    fn size(&self) -> (usize, usize);
    fn fps(&self) -> f64;
    fn source_id(&self) -> &str;
    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>>;
}

/// A fully decoded video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub source_id: String,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::SequenceTooShort(frames.len()));
        }
        let (width, height) = (frames[0].width(), frames[0].height());
        if let Some(bad) = frames
            .iter()
            .position(|f| f.width() != width || f.height() != height)
        {
            return Err(Error::DimensionMismatch(format!(
                "frame {bad} is {}x{}, expected {width}x{height}",
                frames[bad].width(),
                frames[bad].height()
            )));
        }
        Ok(Self {
            frames,
            width,
            height,
            fps,
            source_id: source_id.into(),
        })
    }
}

impl<T: FrameSource + ?Sized> FrameSource for &T {
    fn frame_count(&self) -> usize {
        (**self).frame_count()
    }
    fn size(&self) -> (usize, usize) {
        (**self).size()
    }
    fn fps(&self) -> f64 {
        (**self).fps()
    }
    fn source_id(&self) -> &str {
        (**self).source_id()
    }
    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>> {
        (**self).frame(index)
    }
}

impl FrameSource for FrameSequence {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }
    fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn fps(&self) -> f64 {
        self.fps
    }
    fn source_id(&self) -> &str {
        &self.source_id
    }
    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>> {
        Ok(Cow::Borrowed(&self.frames[index]))
    }
}

/// Per-video metadata stored next to the frames as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub source_id: String,
    pub fps: f64,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
}

impl VideoManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// A printf-style frame filename template such as `frame_%06d.ppm`.
#[derive(Debug, Clone)]
pub struct FramePattern {
    prefix: String,
    width: usize,
    suffix: String,
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("frame pattern `{pattern}` needs one %0Nd"));
        let start = pattern.find('%').ok_or_else(bad)?;
        let rest = &pattern[start + 1..];
        let d = rest.find('d').ok_or_else(bad)?;
        let spec = &rest[..d];
        let width = if spec.is_empty() {
            0
        } else {
            spec.trim_start_matches('0').parse().map_err(|_| bad())?
        };
        Ok(Self {
            prefix: pattern[..start].to_string(),
            width,
            suffix: rest[d + 1..].to_string(),
        })
    }

    pub fn format(&self, index: usize) -> String {
        format!("{}{:0w$}{}", self.prefix, index, self.suffix, w = self.width)
    }

    fn matches(&self, name: &str) -> bool {
        name.len() > self.prefix.len() + self.suffix.len()
            && name.starts_with(&self.prefix)
            && name.ends_with(&self.suffix)
            && name[self.prefix.len()..name.len() - self.suffix.len()]
                .bytes()
                .all(|b| b.is_ascii_digit())
    }
}

/// Lazily decoded frame directory. Frames are resized to the processing
/// resolution as they are read.
#[derive(Debug, Clone)]
pub struct DiskSequence {
    paths: Vec<PathBuf>,
    native: (usize, usize),
    width: usize,
    height: usize,
    fps: f64,
    source_id: String,
}

impl DiskSequence {
    /// Scans `directory` for frames named by `pattern` and checks that they
    /// are contiguous from index 0 and share one size.
    pub fn open(directory: &Path, pattern: &str, config: &PipelineConfig) -> Result<Self> {
        let template = FramePattern::parse(pattern)?;
        let mut count = 0;
        for entry in std::fs::read_dir(directory)? {
            let name = entry?.file_name();
            if template.matches(&name.to_string_lossy()) {
                count += 1;
            }
        }
        if count < 2 {
            return Err(Error::SequenceTooShort(count));
        }
        let mut paths = Vec::with_capacity(count);
        let mut native = None;
        for index in 0..count {
            let path = directory.join(template.format(index));
            if !path.is_file() {
                return Err(Error::Frame {
                    path,
                    message: "missing frame (indices must be contiguous from 0)".into(),
                });
            }
            let dims = image::ImageReader::open(&path)?
                .with_guessed_format()?
                .into_dimensions()
                .map_err(|e| Error::Frame {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            match native {
                None => native = Some(dims),
                Some(first) if first != dims => {
                    return Err(Error::Frame {
                        path,
                        message: format!(
                            "frame is {}x{}, expected {}x{}",
                            dims.0, dims.1, first.0, first.1
                        ),
                    })
                }
                Some(_) => {}
            }
            paths.push(path);
        }
        let manifest = VideoManifest::read(directory.join(MANIFEST_FILE)).ok();
        let source_id = manifest
            .as_ref()
            .map(|m| m.source_id.clone())
            .unwrap_or_else(|| {
                directory
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "video".into())
            });
        let native = native.expect("at least two frames");
        Ok(Self {
            paths,
            native: (native.0 as usize, native.1 as usize),
            width: config.process_width,
            height: config.process_height,
            fps: manifest.map(|m| m.fps).unwrap_or(60.0),
            source_id,
        })
    }

    /// Opens a directory using `frame_%06d.ppm`, falling back to `.pgm`.
    pub fn open_default(directory: &Path, config: &PipelineConfig) -> Result<Self> {
        let ppm = FramePattern::parse(DEFAULT_PATTERN)?;
        if directory.join(ppm.format(0)).exists() {
            Self::open(directory, DEFAULT_PATTERN, config)
        } else {
            Self::open(directory, "frame_%06d.pgm", config)
        }
    }

    pub fn native_size(&self) -> (usize, usize) {
        self.native
    }

    pub fn load_all(&self) -> Result<FrameSequence> {
        let frames = (0..self.paths.len())
            .map(|i| self.frame(i).map(Cow::into_owned))
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames, self.fps, self.source_id.clone())
    }
}

impl FrameSource for DiskSequence {
    fn frame_count(&self) -> usize {
        self.paths.len()
    }
    fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn fps(&self) -> f64 {
        self.fps
    }
    fn source_id(&self) -> &str {
        &self.source_id
    }
    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>> {
        let path = &self.paths[index];
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| Error::Frame {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(Cow::Owned(decode_frame(img, self.width, self.height)))
    }
}

fn decode_frame(img: DynamicImage, width: usize, height: usize) -> Frame {
    let is_gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_)
    );
    let mut rgb = img.into_rgb32f();
    if (rgb.width() as usize, rgb.height() as usize) != (width, height) {
        rgb = imageops::resize(&rgb, width as u32, height as u32, FilterType::Triangle);
    }
    if is_gray {
        let gray = Plane {
            width,
            height,
            data: rgb.pixels().map(|p| p.0[0]).collect(),
        };
        Frame::from_gray(gray)
    } else {
        Frame::from_rgb(width, height, rgb.as_raw())
    }
}

/// Loads a whole frame directory into memory.
pub fn load_sequence(
    directory: &Path,
    pattern: &str,
    config: &PipelineConfig,
) -> Result<FrameSequence> {
    DiskSequence::open(directory, pattern, config)?.load_all()
}

/// Binary PNM: `magic`, size and maximum sample value, then the samples.
fn write_pnm(path: &Path, magic: &str, width: usize, height: usize, max: u16, samples: &[u8]) -> Result<()> {
    let mut buf = format!("{magic}\n{width} {height}\n{max}\n").into_bytes();
    buf.extend_from_slice(samples);
    std::fs::write(path, buf)?;
    Ok(())
}

fn check_len(len: usize, width: usize, height: usize, channels: usize) -> Result<()> {
    if len != width * height * channels {
        return Err(Error::InvalidArgument(format!(
            "buffer of {len} samples for a {width}x{height}x{channels} image"
        )));
    }
    Ok(())
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    check_len(rgb.len(), width, height, 3)?;
    write_pnm(path, "P6", width, height, 255, rgb)
}

pub fn write_pgm8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    check_len(data.len(), width, height, 1)?;
    write_pnm(path, "P5", width, height, 255, data)
}

/// 16-bit samples are stored big endian, as the format requires.
pub fn write_pgm16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    check_len(data.len(), width, height, 1)?;
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_pnm(path, "P5", width, height, 65535, &bytes)
}

/// Reads a PGM as `(width, height, values)` with values scaled to [0, 1].
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Frame {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => other
            .into_luma8()
            .pixels()
            .map(|p| p.0[0] as f64 / 255.0)
            .collect(),
    };
    Ok((w, h, values))
}
