//! Portable graymap images: 16-bit binary `P5` output, `P5`/`P2` input.

use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::ImageDensity;

/// Encode values as `P5` with maxval 65535, scaled so the largest value
/// maps to 65535. Rows are written in index order.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::arg("values", "pixels must be finite and nonnegative"));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(2 * values.len());
    for v in values {
        let q = (v * scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::MalformedImage {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Decode `P5` or `P2`; values are returned divided by maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(c.fail("file too short for a magic number"));
    }
    let binary = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(c.fail("expected magic `P5` or `P2`")),
    };
    c.pos = 2;
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(c.fail("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(c.fail(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let mut values = Vec::with_capacity(n);
    if binary {
        if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
            return Err(c.fail("expected one whitespace byte before the raster"));
        }
        c.pos += 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let need = n * depth;
        if bytes.len() - c.pos < need {
            return Err(Error::MalformedImage {
                offset: bytes.len(),
                reason: format!("truncated raster: need {need} bytes, found {}", bytes.len() - c.pos),
            });
        }
        for k in 0..n {
            let at = c.pos + k * depth;
            let v = if depth == 1 {
                bytes[at] as usize
            } else {
                u16::from_be_bytes([bytes[at], bytes[at + 1]]) as usize
            };
            if v > maxval {
                return Err(Error::MalformedImage {
                    offset: at,
                    reason: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            values.push(v as f64 / maxval as f64);
        }
    } else {
        for _ in 0..n {
            c.skip_space();
            let start = c.pos;
            let v = c.number("sample")?;
            if v > maxval {
                return Err(Error::MalformedImage {
                    offset: start,
                    reason: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            values.push(v as f64 / maxval as f64);
        }
    }
    Ok((width, height, values))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let bytes = encode_pgm(width, height, values)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_image(image: &ImageDensity, path: &Path) -> Result<()> {
    write_pgm(path, image.width(), image.height(), image.pixels())
}

/// Read a graymap as a normalized density on the aspect-preserving box.
pub fn read_image(path: &Path) -> Result<ImageDensity> {
    let (w, h, values) = read_pgm(path)?;
    ImageDensity::with_aspect_domain(w, h, values)?.normalized()
}
