//! Portable float maps.
//!
//! Header `Pf` (one channel) or `PF` (three), then `width height`, then a
//! scale whose sign gives the byte order (negative = little-endian). Rows are
//! stored bottom-up. Width runs along `x`. Values are written as `f32`, so a
//! map round-trips bit-exactly when its values are `f32`-representable.

use std::path::Path;

use lfdepth_autodiff::Tensor;

use crate::error::{io_err, Error, Result};
use crate::image::DisparityMap;

/// Raw decoded float image, `(X, Y, C)` with `y = 0` the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Parses a PFM byte stream.
pub fn decode(bytes: &[u8]) -> std::result::Result<FloatImage, String> {
    let mut pos = 0;
    let mut token = |what: &str| -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format!("header ends before the {what}"));
        }
        let t = std::str::from_utf8(&bytes[start..pos]).map_err(|_| format!("{what} is not ASCII"))?;
        Ok(t.to_string())
    };
    let channels = match token("magic")?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("unknown magic {other:?}")),
    };
    let width: usize = token("width")?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token("height")?.parse().map_err(|_| "bad height".to_string())?;
    let scale: f64 = token("scale")?.parse().map_err(|_| "bad scale".to_string())?;
    if width == 0 || height == 0 {
        return Err("empty image".into());
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err("scale must be nonzero".into());
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing separator after the scale".into());
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| "image too large".to_string())?;
    let payload = &bytes[pos..];
    if payload.len() < 4 * n {
        return Err(format!("truncated payload: {} of {} bytes", payload.len(), 4 * n));
    }
    if payload.len() > 4 * n {
        return Err(format!("{} bytes after the payload", payload.len() - 4 * n));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; n];
    for (row, chunk) in payload.chunks_exact(4 * width * channels).enumerate() {
        let y = height - 1 - row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            if v.is_nan() {
                return Err(format!("NaN at row {y}"));
            }
            let (x, c) = (i / channels, i % channels);
            data[(x * height + y) * channels + c] = v;
        }
    }
    Ok(FloatImage {
        width,
        height,
        channels,
        data,
    })
}

/// Little-endian encoding of a one- or three-channel image.
pub fn encode(img: &FloatImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    for row in 0..img.height {
        let y = img.height - 1 - row;
        for x in 0..img.width {
            for c in 0..img.channels {
                out.extend_from_slice(&img.data[(x * img.height + y) * img.channels + c].to_le_bytes());
            }
        }
    }
    out
}

pub fn map_to_pfm(map: &DisparityMap) -> Vec<u8> {
    encode(&FloatImage {
        width: map.nx(),
        height: map.ny(),
        channels: 1,
        data: map.values().iter().map(|&v| v as f32).collect(),
    })
}

pub fn map_from_pfm(bytes: &[u8]) -> std::result::Result<DisparityMap, String> {
    let img = decode(bytes)?;
    if img.channels != 1 {
        return Err(format!("expected a one-channel map, found {} channels", img.channels));
    }
    if img.data.iter().any(|v| !v.is_finite()) {
        return Err("infinite value in map".into());
    }
    let t = Tensor::new(vec![img.width, img.height], img.data.iter().map(|&v| v as f64).collect())
        .map_err(|e| e.to_string())?;
    DisparityMap::new(t).map_err(|e| e.to_string())
}

pub fn write_pfm(path: impl AsRef<Path>, map: &DisparityMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, map_to_pfm(map)).map_err(io_err(path))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    map_from_pfm(&bytes).map_err(|msg| Error::Format {
        path: path.to_path_buf(),
        msg,
    })
}
