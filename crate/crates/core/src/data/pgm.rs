//! Binary greyscale PGM (`P5`, 8-bit) reading and writing.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} pixels for a {width}×{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            maxval: 255,
            pixels,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(Error::format(path, "not a binary PGM (missing P5 magic)"));
        }
        pos += 2;
        for field in fields.iter_mut() {
            // whitespace and `#` comments may separate header fields
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(path, "malformed PGM header"))?;
        }
        let [width, height, maxval] = fields;
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::format(path, "malformed PGM header"));
        }
        pos += 1;
        if maxval == 0 || maxval > 255 {
            return Err(Error::format(path, format!("unsupported maxval {maxval} (8-bit only)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::format(path, "zero-sized image"));
        }
        let n = width * height;
        if bytes.len() - pos < n {
            return Err(Error::format(path, format!("expected {n} pixel bytes, found {}", bytes.len() - pos)));
        }
        Ok(GrayImage {
            width,
            height,
            maxval: maxval as u8,
            pixels: bytes[pos..pos + n].to_vec(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

/// Maps `[0, 1]` to `0..=255`, clamping out-of-range values.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
