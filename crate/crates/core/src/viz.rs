//! False-color PNG renderings of disparity and error maps.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{invalid, Error, Result};
use crate::image::DisparityMap;

/// Viridis sampled at nine evenly spaced stops.
const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [72, 40, 120],
    [62, 73, 137],
    [49, 104, 142],
    [38, 130, 142],
    [31, 158, 137],
    [53, 183, 121],
    [110, 206, 88],
    [253, 231, 37],
];

/// Ramp color at `t` in `[0, 1]`, linear between stops.
pub fn ramp(t: f64) -> [u8; 3] {
    let pos = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    std::array::from_fn(|c| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8)
}

/// Viridis rendering of `map` with `[lo, hi]` mapped onto the ramp; values
/// outside are clamped.
pub fn falsecolor(map: &DisparityMap, lo: f64, hi: f64) -> Result<RgbImage> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("color range", format!("need finite min < max, got [{lo}, {hi}]")));
    }
    Ok(ImageBuffer::from_fn(map.nx() as u32, map.ny() as u32, |x, y| {
        let t = ((map.at(x as usize, y as usize) - lo) / (hi - lo)).clamp(0.0, 1.0);
        Rgb(ramp(t))
    }))
}

/// Absolute error against `gt`, with `[0, max_error]` on the ramp.
pub fn error_falsecolor(map: &DisparityMap, gt: &DisparityMap, max_error: f64) -> Result<RgbImage> {
    gt.check_aligned(map.nx(), map.ny(), "error map")?;
    let err = DisparityMap::from_fn(map.nx(), map.ny(), |x, y| (map.at(x, y) - gt.at(x, y)).abs());
    falsecolor(&err, 0.0, max_error)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
