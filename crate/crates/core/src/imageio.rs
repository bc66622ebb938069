//! Binary Netpbm codecs (PPM in, PGM out) and stereo pair validation.
//!
//! Decoding accepts any ASCII whitespace runs and `#` comment lines between
//! header tokens; encoding always emits the canonical single-newline header
//! (`P6\n<w> <h>\n255\n`), so identical images produce byte-identical files.
//! Only maxval 255 is supported.

use thiserror::Error;

/// Errors produced by the codecs and pair validation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}: only 255 is supported")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("dimension mismatch: left is {left_width}x{left_height}, right is {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
}

/// An 8-bit RGB pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

/// Dense row-major raster of 8-bit RGB pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RgbImage {
    /// Panics if `pixels.len() != width * height` or either dimension is zero.
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(pixels.len(), width * height, "pixel count must be width * height");
        Self { width, height, pixels }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[Rgb] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }
}

/// Dense row-major raster of 8-bit gray values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Panics if `pixels.len() != width * height` or either dimension is zero.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(pixels.len(), width * height, "pixel count must be width * height");
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// A left/right image pair validated to share dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StereoPair {
    left: RgbImage,
    right: RgbImage,
}

impl StereoPair {
    pub fn new(left: RgbImage, right: RgbImage) -> Result<Self, ImageError> {
        if left.width() != right.width() || left.height() != right.height() {
            return Err(ImageError::DimensionMismatch {
                left_width: left.width(),
                left_height: left.height(),
                right_width: right.width(),
                right_height: right.height(),
            });
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &RgbImage {
        &self.left
    }

    pub fn right(&self) -> &RgbImage {
        &self.right
    }

    pub fn width(&self) -> usize {
        self.left.width()
    }

    pub fn height(&self) -> usize {
        self.left.height()
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn expect_magic(&mut self, magic: &[u8; 2]) -> Result<(), ImageError> {
        if self.bytes.len() < 2 || &self.bytes[..2] != magic {
            return Err(ImageError::MalformedHeader(format!(
                "expected magic {:?}",
                std::str::from_utf8(magic).unwrap()
            )));
        }
        self.pos = 2;
        Ok(())
    }

    /// Skips whitespace runs and `#` comment lines. Returns how many bytes were skipped.
    fn skip_separators(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        self.pos - start
    }

    fn read_number(&mut self, what: &str) -> Result<u32, ImageError> {
        if self.skip_separators() == 0 {
            return Err(ImageError::MalformedHeader(format!(
                "missing separator before {what}"
            )));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("{what} out of range")))
    }

    /// The header ends with exactly one whitespace byte before the payload.
    fn finish(mut self) -> Result<&'a [u8], ImageError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(ImageError::MalformedHeader(
                "missing whitespace after maxval".into(),
            )),
        }
    }
}

fn read_header<'a>(bytes: &'a [u8], magic: &[u8; 2]) -> Result<(usize, usize, &'a [u8]), ImageError> {
    let mut reader = HeaderReader::new(bytes);
    reader.expect_magic(magic)?;
    let width = reader.read_number("width")?;
    let height = reader.read_number("height")?;
    let maxval = reader.read_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero dimension".into()));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    let payload = reader.finish()?;
    Ok((width as usize, height as usize, payload))
}

/// Decodes a binary PPM (magic `P6`, maxval 255).
pub fn read_ppm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let (width, height, payload) = read_header(bytes, b"P6")?;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(ImageError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    let pixels = payload[..expected]
        .chunks_exact(3)
        .map(|c| Rgb::new(c[0], c[1], c[2]))
        .collect();
    Ok(RgbImage::new(width, height, pixels))
}

/// Encodes a binary PPM (magic `P6`, maxval 255) in canonical header form.
pub fn write_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.reserve(img.pixels().len() * 3);
    for p in img.pixels() {
        out.extend_from_slice(&[p.r, p.g, p.b]);
    }
    out
}

/// Decodes a binary PGM (magic `P5`, maxval 255).
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let (width, height, payload) = read_header(bytes, b"P5")?;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(ImageError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    Ok(GrayImage::new(width, height, payload[..expected].to_vec()))
}

/// Encodes a binary PGM (magic `P5`, maxval 255) in canonical header form.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}
