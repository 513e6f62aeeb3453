//! Disparity accuracy metrics over the interior of a map.

use crate::error::{invalid, Result};
use crate::image::DisparityMap;

/// Bad-pixel thresholds reported for dense light fields.
pub const DENSE_THRESHOLDS: [f64; 3] = [0.07, 0.03, 0.01];
/// Bad-pixel thresholds reported for sparse light fields.
pub const SPARSE_THRESHOLDS: [f64; 3] = [0.3, 0.1, 0.05];

fn interior_errors(d: &DisparityMap, gt: &DisparityMap, border: usize) -> Result<Vec<f64>> {
    gt.check_aligned(d.nx(), d.ny(), "metric")?;
    if 2 * border >= d.nx() || 2 * border >= d.ny() {
        return Err(invalid(
            "border margin",
            format!("{border} leaves no pixels of a {}x{} map", d.nx(), d.ny()),
        ));
    }
    let mut out = Vec::with_capacity((d.nx() - 2 * border) * (d.ny() - 2 * border));
    for x in border..d.nx() - border {
        for y in border..d.ny() - border {
            out.push(d.at(x, y) - gt.at(x, y));
        }
    }
    Ok(out)
}

/// `100 x` mean squared error.
pub fn mse_x100(d: &DisparityMap, gt: &DisparityMap, border: usize) -> Result<f64> {
    let e = interior_errors(d, gt, border)?;
    Ok(100.0 * e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64)
}

/// Percentage of pixels with absolute error above `threshold`.
pub fn bpr(d: &DisparityMap, gt: &DisparityMap, threshold: f64, border: usize) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(invalid("threshold", "must be positive"));
    }
    let e = interior_errors(d, gt, border)?;
    let bad = e.iter().filter(|v| v.abs() > threshold).count();
    Ok(100.0 * bad as f64 / e.len() as f64)
}
