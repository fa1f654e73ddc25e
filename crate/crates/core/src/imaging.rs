//! Raster types and the pixel plumbing shared by training and inference.
//!
//! Images are interleaved 8-bit sRGB (`ImageU8`). Two on-disk formats are
//! understood: binary PPM (`P6`, maxval 255) and 8-bit PNG (RGB, RGBA with
//! the alpha channel discarded, or palette).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dimensions {width}x{height} for {len} samples")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("histogram bin count {0} does not divide 256")]
    InvalidBins(usize),
}

/// Interleaved row-major 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageU8 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageU8")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// An image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Build an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
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

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn same_dimensions(&self, other: &ImageU8) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Interleaved floating-point raster with samples clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF32 {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageF32 {
    /// Non-finite samples are rejected; finite ones are clamped into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        for v in &mut data {
            if !v.is_finite() {
                return Err(ImagingError::CorruptFile(
                    "non-finite sample in floating-point image".into(),
                ));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_u8(img: &ImageU8) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&b| b as f32 / 255.0).collect(),
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

    /// Round every sample to the nearest byte, ties upward.
    pub fn to_u8(&self) -> ImageU8 {
        ImageU8 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| unit_to_byte(v as f64)).collect(),
        }
    }
}

/// Map a normalized sample to a byte: clamp, scale by 255, round half-up.
#[inline]
pub fn unit_to_byte(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// High and low nibbles of every sample of an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlanePair {
    pub width: usize,
    pub height: usize,
    pub msb: Vec<u8>,
    pub lsb: Vec<u8>,
}

impl BitPlanePair {
    pub fn recombine(&self) -> ImageU8 {
        let data = self
            .msb
            .iter()
            .zip(&self.lsb)
            .map(|(&hi, &lo)| (hi << 4) | lo)
            .collect();
        ImageU8 {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

pub fn split_bitplanes(img: &ImageU8) -> BitPlanePair {
    BitPlanePair {
        width: img.width,
        height: img.height,
        msb: img.data.iter().map(|&b| b >> 4).collect(),
        lsb: img.data.iter().map(|&b| b & 0x0f).collect(),
    }
}

/// Bilinear resampling with half-pixel (align-corners = false) sample centers.
///
/// Source coordinates outside the raster are clamped to the border, so
/// upsampling a 1x1 image replicates it. Output samples round half-up.
pub fn bilinear_downsample(img: &ImageU8, out_w: usize, out_h: usize) -> ImageU8 {
    assert!(out_w > 0 && out_h > 0, "target dimensions must be positive");
    let xs = axis_taps(img.width, out_w);
    let ys = axis_taps(img.height, out_h);
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for &(y0, y1, fy) in &ys {
        let row0 = &img.data[y0 * img.width * 3..(y0 + 1) * img.width * 3];
        let row1 = &img.data[y1 * img.width * 3..(y1 + 1) * img.width * 3];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let a = row0[x0 * 3 + c] as f64;
                let b = row0[x1 * 3 + c] as f64;
                let p = row1[x0 * 3 + c] as f64;
                let q = row1[x1 * 3 + c] as f64;
                let top = a + (b - a) * fx;
                let bottom = p + (q - p) * fx;
                let v = top + (bottom - top) * fy;
                data.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageU8 {
        width: out_w,
        height: out_h,
        data,
    }
}

fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    let last = (in_len - 1) as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Per-channel normalized histograms with `bins` equal-width bins.
pub fn channel_histogram(img: &ImageU8, bins: usize) -> Result<[Vec<f64>; 3], ImagingError> {
    if bins == 0 || bins > 256 || 256 % bins != 0 {
        return Err(ImagingError::InvalidBins(bins));
    }
    let width = 256 / bins;
    let mut counts = [vec![0u64; bins], vec![0u64; bins], vec![0u64; bins]];
    for px in img.pixels() {
        for c in 0..3 {
            counts[c][px[c] as usize / width] += 1;
        }
    }
    let total = img.pixel_count() as f64;
    Ok(counts.map(|h| h.into_iter().map(|n| n as f64 / total).collect()))
}

/// Sum over channels of the L1 distance between normalized histograms.
pub fn histogram_l1(a: &[Vec<f64>; 3], b: &[Vec<f64>; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ha, hb)| ha.iter().zip(hb).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum()
}

fn io_err(path: &Path, source: std::io::Error) -> ImagingError {
    ImagingError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

/// Decode a PNG or P6 PPM file, chosen by content rather than extension.
pub fn load_image(path: &Path) -> Result<ImageU8, ImagingError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageU8, ImagingError> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(b"P3") || bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        Err(ImagingError::UnsupportedFormat(
            "only binary RGB PPM (P6) is supported".into(),
        ))
    } else {
        Err(ImagingError::UnsupportedFormat(
            "expected PNG or binary PPM (P6)".into(),
        ))
    }
}

/// Write the image; the format follows the extension (`.ppm` or `.png`).
pub fn save_image(img: &ImageU8, path: &Path) -> Result<(), ImagingError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    match ext.as_deref() {
        Some("ppm") => {
            write!(out, "P6\n{} {}\n255\n", img.width, img.height).map_err(|e| io_err(path, e))?;
            out.write_all(&img.data).map_err(|e| io_err(path, e))?;
        }
        Some("png") => {
            let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| io_err(path, std::io::Error::other(e)))?;
            writer
                .write_image_data(&img.data)
                .map_err(|e| io_err(path, std::io::Error::other(e)))?;
            writer
                .finish()
                .map_err(|e| io_err(path, std::io::Error::other(e)))?;
        }
        _ => {
            return Err(ImagingError::UnsupportedFormat(format!(
                "cannot infer output format from {}",
                path.display()
            )))
        }
    }
    out.flush().map_err(|e| io_err(path, e))
}

fn decode_png(bytes: &[u8]) -> Result<ImageU8, ImagingError> {
    let corrupt = |e: png::DecodingError| ImagingError::CorruptFile(e.to_string());
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let info = reader.info();
    if info.bit_depth == png::BitDepth::Sixteen {
        return Err(ImagingError::UnsupportedFormat(
            "16-bit PNG input is not supported".into(),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImagingError::CorruptFile("PNG dimensions overflow".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    buf.truncate(frame.buffer_size());
    let data = match (frame.color_type, frame.bit_depth) {
        (png::ColorType::Rgb, png::BitDepth::Eight) => buf,
        (png::ColorType::Rgba, png::BitDepth::Eight) => {
            log::warn!("dropping alpha channel from RGBA PNG");
            buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()
        }
        (ct, bd) => {
            return Err(ImagingError::UnsupportedFormat(format!(
                "PNG color type {ct:?} at depth {bd:?}; expected 8-bit RGB or RGBA"
            )))
        }
    };
    ImageU8::new(w, h, data)
}

fn decode_ppm(bytes: &[u8]) -> Result<ImageU8, ImagingError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = ppm_header_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImagingError::UnsupportedFormat(format!(
            "PPM maxval {maxval}; only 255 is supported"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImagingError::CorruptFile("truncated PPM header".into()));
    }
    pos += 1;
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| ImagingError::CorruptFile("PPM dimensions overflow".into()))?;
    let raster = bytes
        .get(pos..pos + len)
        .ok_or_else(|| ImagingError::CorruptFile("truncated PPM raster".into()))?;
    ImageU8::new(width, height, raster.to_vec())
        .map_err(|_| ImagingError::CorruptFile("PPM with zero width or height".into()))
}

fn ppm_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize, ImagingError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(ImagingError::CorruptFile("truncated PPM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImagingError::CorruptFile("malformed PPM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImagingError::CorruptFile("PPM header value out of range".into()))
}
