//! Binary (P5) greymap import and export.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::RealImage;

/// 8-bit P5 bytes with per-image min-max scaling; a constant image maps to 0.
pub fn encode_pgm(img: &RealImage) -> Vec<u8> {
    let (lo, hi) = img.min_max();
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Parses P5 data (8- or 16-bit) into values in `[0, 1]`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<RealImage> {
    let format = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: format!("pgm: {reason}"),
    };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
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
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                what: "pgm header",
                needed: pos as u64 + 1,
                available: bytes.len() as u64,
            });
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P5" {
        return Err(format("only binary P5 greymaps are supported"));
    }
    let number = |f: &[u8]| -> Result<usize> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format("malformed header number"))
    };
    let (width, height, maxval) = (number(fields[1])?, number(fields[2])?, number(fields[3])?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(format("invalid dimensions or maximum value"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(sample))
        .and_then(|n| n.checked_add(pos))
        .ok_or_else(|| format("dimensions overflow"))?;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            what: "pgm raster",
            needed: needed as u64,
            available: bytes.len() as u64,
        });
    }
    let raster = &bytes[pos..needed];
    let scale = 1.0 / maxval as f64;
    let data = if sample == 1 {
        raster
            .iter()
            .map(|&b| (b as f64 * scale).min(1.0))
            .collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 * scale).min(1.0))
            .collect()
    };
    RealImage::new(height, width, data)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &RealImage) -> Result<()> {
    super::tensor::write_bytes(path.as_ref(), &encode_pgm(img))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<RealImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}
