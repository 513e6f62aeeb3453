use super::check_rank;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Bilinear tap along one axis: `(lo, hi, frac, inside)`.
///
/// Coordinates are clamped to `[0, n-1]`; `inside` is false when the clamp
/// was active, so the coordinate derivative vanishes there.
#[inline]
pub(crate) fn axis_tap(p: f64, n: usize) -> (usize, usize, f64, bool) {
    if n == 1 {
        return (0, 0, 0.0, false);
    }
    let hi_edge = (n - 1) as f64;
    let inside = (0.0..=hi_edge).contains(&p);
    let pc = p.clamp(0.0, hi_edge);
    let lo = (pc.floor() as usize).min(n - 2);
    (lo, lo + 1, pc - lo as f64, inside)
}

fn validate(x: &Tensor, grid: &Tensor) -> Result<()> {
    check_rank("bilinear-sample", x, 3)?;
    check_rank("bilinear-sample", grid, 3)?;
    if grid.shape()[0] != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "bilinear-sample",
            axis: 0,
            lhs: x.shape().to_vec(),
            rhs: grid.shape().to_vec(),
        });
    }
    Ok(())
}

/// Samples `x: (C, X, Y)` at absolute positions `grid: (2, X', Y')`, where
/// `grid[0]` holds x coordinates and `grid[1]` y coordinates. Out-of-range
/// positions are clamped to the border.
pub fn bilinear_sample(x: &Tensor, grid: &Tensor) -> Result<Tensor> {
    validate(x, grid)?;
    let (c, nx, ny) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ox, oy) = (grid.shape()[1], grid.shape()[2]);
    let npix = ox * oy;
    let (gx, gy) = grid.data().split_at(npix);
    let src = x.data();
    let plane = nx * ny;
    let mut out = vec![0.0; c * npix];
    for p in 0..npix {
        let (x0, x1, fx, _) = axis_tap(gx[p], nx);
        let (y0, y1, fy, _) = axis_tap(gy[p], ny);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w10 = fx * (1.0 - fy);
        let w11 = fx * fy;
        let (i00, i01, i10, i11) = (x0 * ny + y0, x0 * ny + y1, x1 * ny + y0, x1 * ny + y1);
        for ch in 0..c {
            let s = &src[ch * plane..(ch + 1) * plane];
            out[ch * npix + p] = w00 * s[i00] + w01 * s[i01] + w10 * s[i10] + w11 * s[i11];
        }
    }
    Tensor::new(vec![c, ox, oy], out)
}

pub(super) fn bilinear_sample_backward(x: &Tensor, grid: &Tensor, g: &Tensor) -> Vec<Tensor> {
    let (c, nx, ny) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ox, oy) = (grid.shape()[1], grid.shape()[2]);
    let npix = ox * oy;
    let (gx, gy) = grid.data().split_at(npix);
    let src = x.data();
    let gd = g.data();
    let plane = nx * ny;
    let mut dx = vec![0.0; src.len()];
    let mut dgrid = vec![0.0; 2 * npix];
    for p in 0..npix {
        let (x0, x1, fx, in_x) = axis_tap(gx[p], nx);
        let (y0, y1, fy, in_y) = axis_tap(gy[p], ny);
        let (i00, i01, i10, i11) = (x0 * ny + y0, x0 * ny + y1, x1 * ny + y0, x1 * ny + y1);
        let mut dpx = 0.0;
        let mut dpy = 0.0;
        for ch in 0..c {
            let go = gd[ch * npix + p];
            if go == 0.0 {
                continue;
            }
            let base = ch * plane;
            dx[base + i00] += go * (1.0 - fx) * (1.0 - fy);
            dx[base + i01] += go * (1.0 - fx) * fy;
            dx[base + i10] += go * fx * (1.0 - fy);
            dx[base + i11] += go * fx * fy;
            let s = &src[base..base + plane];
            dpx += go * ((1.0 - fy) * (s[i10] - s[i00]) + fy * (s[i11] - s[i01]));
            dpy += go * ((1.0 - fx) * (s[i01] - s[i00]) + fx * (s[i11] - s[i10]));
        }
        if in_x {
            dgrid[p] = dpx;
        }
        if in_y {
            dgrid[npix + p] = dpy;
        }
    }
    vec![
        Tensor::new(x.shape().to_vec(), dx).expect("input shape"),
        Tensor::new(grid.shape().to_vec(), dgrid).expect("grid shape"),
    ]
}
