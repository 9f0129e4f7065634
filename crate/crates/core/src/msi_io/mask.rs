//! Segmentation masks: 8-bit PGM (`P5`/`P2`), 8-bit grayscale PNG, or CSV of
//! integers. Row `y` of the file is mask row `y`; label 0 is background.

use std::path::Path;

use super::{DatasetHandle, MsiError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    labels: Vec<u8>,
}

impl SegmentationMask {
    /// `labels` is row-major, `width * height` long.
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self, MsiError> {
        if labels.len() != width as usize * height as usize {
            return Err(MsiError::UnparsableMask(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            )));
        }
        Ok(SegmentationMask { width, height, labels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_at(&self, x: u32, y: u32) -> u8 {
        self.labels[(y * self.width + x) as usize]
    }

    /// Highest label value `K`.
    pub fn region_count(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Indicator image (1.0 inside, 0.0 outside) of label `k`.
    pub fn indicator(&self, k: u8) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(u8::from(l == k))).collect()
    }

    /// Indicator image of all labels > 0.
    pub fn foreground(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(u8::from(l > 0))).collect()
    }

    pub fn check_dims(&self, handle: &DatasetHandle) -> Result<(), MsiError> {
        if self.width != handle.width() || self.height != handle.height() {
            return Err(MsiError::DimensionMismatch {
                mask_w: self.width,
                mask_h: self.height,
                data_w: handle.width(),
                data_h: handle.height(),
            });
        }
        Ok(())
    }

    /// Binary `P5` PGM with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.labels.chunks(self.width.max(1) as usize) {
            let cells: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Loads a mask, picking the decoder from the file's magic bytes (PGM, PNG)
/// and falling back to CSV.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SegmentationMask, MsiError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| MsiError::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        parse_pgm(&bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        parse_png(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| MsiError::UnparsableMask("CSV mask is not valid UTF-8".into()))?;
        parse_csv(text)
    }
}

fn bad(msg: impl Into<String>) -> MsiError {
    MsiError::UnparsableMask(msg.into())
}

pub fn parse_csv(text: &str) -> Result<SegmentationMask, MsiError> {
    let mut labels = Vec::new();
    let mut width = None;
    let mut height = 0u32;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<u8> = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<u8>()
                    .map_err(|_| bad(format!("line {}: {c:?} is not a label in 0..=255", lineno + 1)))
            })
            .collect::<Result<_, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(bad(format!(
                    "line {} has {} columns, expected {w}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        labels.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| bad("empty CSV mask"))?;
    SegmentationMask::new(width as u32, height, labels)
}

/// PGM header tokens, skipping `#` comments.
fn pgm_tokens(bytes: &[u8], count: usize) -> Result<(Vec<u32>, usize), MsiError> {
    let mut pos = 2;
    let mut tokens = Vec::with_capacity(count);
    while tokens.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).unwrap();
        tokens.push(tok.parse().map_err(|_| bad("PGM header value out of range"))?);
    }
    Ok((tokens, pos))
}

fn parse_pgm(bytes: &[u8]) -> Result<SegmentationMask, MsiError> {
    let binary = bytes.starts_with(b"P5");
    let (header, pos) = pgm_tokens(bytes, 3)?;
    let (width, height, maxval) = (header[0], header[1], header[2]);
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("only 8-bit PGM is supported (maxval {maxval})")));
    }
    let n = width as usize * height as usize;
    let labels = if binary {
        // exactly one whitespace byte separates the header from the raster
        let data = bytes.get(pos + 1..pos + 1 + n).ok_or_else(|| bad("truncated PGM raster"))?;
        data.to_vec()
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("PGM raster is not ASCII"))?;
        let values: Vec<u8> = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<u8>().map_err(|_| bad(format!("bad PGM value {t:?}"))))
            .collect::<Result<_, _>>()?;
        if values.len() != n {
            return Err(bad(format!("PGM raster has {} values, expected {n}", values.len())));
        }
        values
    };
    SegmentationMask::new(width, height, labels)
}

fn parse_png(bytes: &[u8]) -> Result<SegmentationMask, MsiError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(bad(format!(
            "PNG mask must be 8-bit grayscale, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width, info.height);
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| bad("PNG too large"))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let stride = frame.line_size;
    let mut labels = Vec::with_capacity(width as usize * height as usize);
    for row in buf[..frame.buffer_size()].chunks(stride) {
        labels.extend_from_slice(&row[..width as usize]);
    }
    SegmentationMask::new(width, height, labels)
}

/// Encodes an 8-bit grayscale PNG.
pub fn encode_gray_png(width: u32, height: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(pixels).expect("in-memory PNG data");
    }
    out
}
