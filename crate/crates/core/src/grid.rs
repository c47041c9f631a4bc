//! Grid and geometry types shared by every stage, plus file I/O for
//! Middlebury `.flo` flow fields and 8-bit foreground masks.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

/// Magic number at the start of every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

const FLO_HEADER_LEN: usize = 12;

/// Errors raised while constructing grids or reading and writing them.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("flow data has {actual} vectors, expected {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("non-finite flow component at pixel ({x}, {y})")]
    NonFiniteValue { x: usize, y: usize },
    #[error("not a .flo file: magic bytes {0:02x?}")]
    MagicMismatch([u8; 4]),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: i64, height: i64 },
    #[error("unsupported mask format: {0}")]
    UnsupportedFormat(String),
    #[error("mask is not 8-bit single channel: {0}")]
    DepthMismatch(String),
    #[error("foreground policy must contain at least one label")]
    EmptyPolicy,
    #[error("invalid foreground label list {0:?}")]
    InvalidPolicy(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path, source: io::Error) -> GridError {
    GridError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Dense per-pixel displacement field, row-major `(u, v)` pairs in pixels.
#[derive(Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f32; 2]>,
}

impl fmt::Debug for FlowField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowField")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 2]>) -> Result<Self, GridError> {
        if data.len() != width * height {
            return Err(GridError::LengthMismatch {
                width,
                height,
                actual: data.len(),
            });
        }
        if let Some(i) = data
            .iter()
            .position(|uv| !uv[0].is_finite() || !uv[1].is_finite())
        {
            return Err(GridError::NonFiniteValue {
                x: i % width,
                y: i / width,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 2]; width * height],
        }
    }

    /// Builds a field by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 2],
    ) -> Result<Self, GridError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a continuous position; coordinates outside the
    /// grid clamp to the border.
    ///
    /// Uses the lerp form so that a constant neighbourhood returns that
    /// constant bit for bit.
    pub fn bilinear(&self, x: f64, y: f64) -> [f64; 2] {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            let c00 = self.get(x0, y0)[c] as f64;
            let c10 = self.get(x1, y0)[c] as f64;
            let c01 = self.get(x0, y1)[c] as f64;
            let c11 = self.get(x1, y1)[c] as f64;
            let top = c00 + fx * (c10 - c00);
            let bottom = c01 + fx * (c11 - c01);
            *slot = top + fy * (bottom - top);
        }
        out
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<[f32; 2]>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }
}

/// Decodes the bytes of a `.flo` file.
pub fn decode_flo(bytes: &[u8]) -> Result<FlowField, GridError> {
    if bytes.len() < 4 {
        return Err(GridError::TruncatedFile {
            expected: FLO_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FLO_MAGIC.to_le_bytes() {
        return Err(GridError::MagicMismatch(magic));
    }
    if bytes.len() < FLO_HEADER_LEN {
        return Err(GridError::TruncatedFile {
            expected: FLO_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width < 0 || height < 0 {
        return Err(GridError::InvalidDimensions {
            width: width as i64,
            height: height as i64,
        });
    }
    let (width, height) = (width as usize, height as usize);
    let expected = FLO_HEADER_LEN + width * height * 8;
    if bytes.len() < expected {
        return Err(GridError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[FLO_HEADER_LEN..expected]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    FlowField::new(width, height, data)
}

/// Encodes a field in `.flo` layout: magic, i32 width, i32 height, then
/// interleaved row-major `u, v` as f32, all little-endian.
pub fn encode_flo(field: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(FLO_HEADER_LEN + field.data.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width as i32).to_le_bytes());
    out.extend_from_slice(&(field.height as i32).to_le_bytes());
    for uv in &field.data {
        out.extend_from_slice(&uv[0].to_le_bytes());
        out.extend_from_slice(&uv[1].to_le_bytes());
    }
    out
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, GridError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_flo(&bytes)
}

pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&encode_flo(field))
        .map_err(|e| io_err(path, e))
}

/// Reads only the header of a `.flo` file and returns `(width, height)`.
pub fn read_flo_dims(path: impl AsRef<Path>) -> Result<(usize, usize), GridError> {
    use std::io::Read;
    let path = path.as_ref();
    let mut header = [0u8; FLO_HEADER_LEN];
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let n = file.read(&mut header).map_err(|e| io_err(path, e))?;
    if n >= 4 && header[0..4] != FLO_MAGIC.to_le_bytes() {
        return Err(GridError::MagicMismatch(header[0..4].try_into().unwrap()));
    }
    if n < FLO_HEADER_LEN {
        return Err(GridError::TruncatedFile {
            expected: FLO_HEADER_LEN,
            actual: n,
        });
    }
    let w = i32::from_le_bytes(header[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(header[8..12].try_into().unwrap());
    if w < 0 || h < 0 {
        return Err(GridError::InvalidDimensions {
            width: w as i64,
            height: h as i64,
        });
    }
    Ok((w as usize, h as usize))
}

/// Set of 8-bit label values counted as foreground.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct FgPolicy {
    labels: [bool; 256],
}

impl FgPolicy {
    pub fn new(labels: impl IntoIterator<Item = u8>) -> Result<Self, GridError> {
        let mut set = [false; 256];
        for l in labels {
            set[l as usize] = true;
        }
        if !set.iter().any(|&b| b) {
            return Err(GridError::EmptyPolicy);
        }
        Ok(Self { labels: set })
    }

    #[inline]
    pub fn contains(&self, label: u8) -> bool {
        self.labels[label as usize]
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..=255u8).filter(|&l| self.contains(l)).collect()
    }
}

/// CDnet convention: only 255 (motion) is foreground.
impl Default for FgPolicy {
    fn default() -> Self {
        Self::new([255]).unwrap()
    }
}

impl fmt::Debug for FgPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.labels()).finish()
    }
}

impl fmt::Display for FgPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.labels().iter().map(u8::to_string).collect();
        f.write_str(&labels.join(","))
    }
}

impl std::str::FromStr for FgPolicy {
    type Err = GridError;

    /// Parses a comma-separated label list such as `"170,255"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let labels = s
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u8>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| GridError::InvalidPolicy(s.to_string()))?;
        Self::new(labels)
    }
}

/// 8-bit label image plus the policy deciding which labels are foreground.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    fg_policy: FgPolicy,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("fg_policy", &self.fg_policy)
            .finish_non_exhaustive()
    }
}

impl Mask {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        fg_policy: FgPolicy,
    ) -> Result<Self, GridError> {
        if labels.len() != width * height {
            return Err(GridError::LengthMismatch {
                width,
                height,
                actual: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
            fg_policy,
        })
    }

    /// Binary mask from a predicate: 255 where `f` is true, 0 elsewhere.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(if f(x, y) { 255 } else { 0 });
            }
        }
        Self {
            width,
            height,
            labels,
            fg_policy: FgPolicy::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn fg_policy(&self) -> FgPolicy {
        self.fg_policy
    }

    pub fn with_policy(mut self, fg_policy: FgPolicy) -> Self {
        self.fg_policy = fg_policy;
        self
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.fg_policy.contains(self.label(x, y))
    }

    pub fn foreground_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| self.fg_policy.contains(l))
            .count()
    }
}

/// Reads an 8-bit single-channel mask. Binary PGM (`P5`) and grayscale PNG
/// are accepted; the format is detected from the file content.
pub fn read_mask(path: impl AsRef<Path>, fg_policy: FgPolicy) -> Result<Mask, GridError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_mask(&bytes, fg_policy)
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

pub fn decode_mask(bytes: &[u8], fg_policy: FgPolicy) -> Result<Mask, GridError> {
    if bytes.starts_with(b"P5") {
        let (width, height, maxval, offset) = parse_pgm_header(bytes)?;
        if maxval > 255 {
            return Err(GridError::DepthMismatch(format!("PGM maxval {maxval}")));
        }
        let expected = offset + width * height;
        if bytes.len() < expected {
            return Err(GridError::TruncatedFile {
                expected,
                actual: bytes.len(),
            });
        }
        Mask::new(width, height, bytes[offset..expected].to_vec(), fg_policy)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| GridError::UnsupportedFormat(e.to_string()))?;
        match img {
            image::DynamicImage::ImageLuma8(gray) => {
                let (w, h) = gray.dimensions();
                Mask::new(w as usize, h as usize, gray.into_raw(), fg_policy)
            }
            other => Err(GridError::DepthMismatch(format!("{:?}", other.color()))),
        }
    } else if bytes.starts_with(b"P") && bytes.len() > 1 && bytes[1].is_ascii_digit() {
        Err(GridError::DepthMismatch(format!(
            "netpbm variant P{}",
            bytes[1] as char
        )))
    } else {
        Err(GridError::UnsupportedFormat(
            "expected binary PGM or PNG".to_string(),
        ))
    }
}

/// Returns `(width, height, maxval, payload offset)`.
fn parse_pgm_header(bytes: &[u8]) -> Result<(usize, usize, usize, usize), GridError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => {
                    return Err(GridError::TruncatedFile {
                        expected: pos + 1,
                        actual: bytes.len(),
                    })
                }
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(GridError::UnsupportedFormat("malformed PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| GridError::UnsupportedFormat("malformed PGM header".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(GridError::UnsupportedFormat("malformed PGM header".into()));
    }
    Ok((fields[0], fields[1], fields[2], pos + 1))
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.labels);
    out
}

/// Writes the raw labels as binary PGM (`P5`, maxval 255).
pub fn write_mask_pgm(mask: &Mask, path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(mask)).map_err(|e| io_err(path, e))
}

/// Returns `(width, height)` of a PGM or PNG mask without decoding the raster.
pub fn read_mask_dims(path: impl AsRef<Path>) -> Result<(usize, usize), GridError> {
    use std::io::Read;
    let path = path.as_ref();
    let mut head = vec![0u8; 512];
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let n = file.read(&mut head).map_err(|e| io_err(path, e))?;
    head.truncate(n);
    if head.starts_with(b"P5") {
        let (w, h, _, _) = parse_pgm_header(&head)?;
        Ok((w, h))
    } else if head.starts_with(&PNG_SIGNATURE) {
        let (w, h) =
            image::image_dimensions(path).map_err(|e| GridError::UnsupportedFormat(e.to_string()))?;
        Ok((w as usize, h as usize))
    } else {
        Err(GridError::UnsupportedFormat(
            "expected binary PGM or PNG".to_string(),
        ))
    }
}

/// Axis-aligned box over pixel coordinates, `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    /// Returns `None` for empty boxes.
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Option<Self> {
        (x_min < x_max && y_min < y_max).then_some(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
    }

    /// Shifts the box by `(dx, dy)`, saturating at zero.
    pub fn translated(&self, dx: i64, dy: i64) -> BBox {
        let shift = |v: u32, d: i64| (v as i64 + d).max(0) as u32;
        BBox {
            x_min: shift(self.x_min, dx),
            y_min: shift(self.y_min, dy),
            x_max: shift(self.x_max, dx).max(shift(self.x_min, dx) + 1),
            y_max: shift(self.y_max, dy).max(shift(self.y_min, dy) + 1),
        }
    }

    pub fn to_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Intersection over union of two boxes; 0 when they are disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}
