use lfdepth_autodiff::ops::bilinear_sample;
use lfdepth_autodiff::{Graph, Tensor, Var};

use crate::error::{invalid, Result};
use crate::image::{DisparityMap, Image};
use crate::lightfield::{Orientation, ViewCombination};

/// Which source view of a combination is being warped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of the x displacement: left samples at `x + d`, right at `x - d`.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Brings a combination into row form. Column combinations are turned a
/// quarter counterclockwise so their vertical parallax becomes horizontal.
pub fn rotate_inputs(views: [Image; 3], orientation: Orientation) -> [Image; 3] {
    match orientation {
        Orientation::Row => views,
        Orientation::Column => views.map(|v| v.rotate(1)),
    }
}

/// Absolute sampling grid `(2, X, Y)` for positions `(x + fx * d, y + fy * d)`.
pub(crate) fn shift_grid(d: &DisparityMap, fx: f64, fy: f64) -> Tensor {
    let (nx, ny) = (d.nx(), d.ny());
    let vals = d.values();
    let mut data = Vec::with_capacity(2 * nx * ny);
    for x in 0..nx {
        for y in 0..ny {
            data.push(x as f64 + fx * vals[x * ny + y]);
        }
    }
    for x in 0..nx {
        for y in 0..ny {
            data.push(y as f64 + fy * vals[x * ny + y]);
        }
    }
    Tensor::new(vec![2, nx, ny], data).expect("grid shape")
}

/// Samples `source` at `(x + fx * d(x, y), y + fy * d(x, y))` with bilinear
/// interpolation and border clamping.
pub fn sample_shifted(source: &Image, d: &DisparityMap, fx: f64, fy: f64) -> Result<Image> {
    d.check_aligned(source.nx(), source.ny(), "warp")?;
    let out = bilinear_sample(&source.to_chw(), &shift_grid(d, fx, fy))?;
    Image::from_chw(&out)
}

/// Warps a source view of a row-form combination onto the center view.
pub fn warp_source_to_center(source: &Image, disparity: &DisparityMap, side: Side) -> Result<Image> {
    sample_shifted(source, disparity, side.sign(), 0.0)
}

/// Scales a combination's disparity to one angular unit and returns it to
/// the frame of the unrotated center view.
pub fn finalize_disparity(d: &DisparityMap, combo: &ViewCombination) -> Result<DisparityMap> {
    let b = match combo.orientation {
        Orientation::Row => combo.center.0 as f64 - combo.left.0 as f64,
        Orientation::Column => combo.center.1 as f64 - combo.left.1 as f64,
    };
    if b == 0.0 {
        return Err(invalid("view combination", "zero baseline"));
    }
    let scaled = d.map(|v| v / b);
    Ok(match combo.orientation {
        Orientation::Row => scaled,
        Orientation::Column => scaled.rotate(-1),
    })
}

/// Graph version of the horizontal warp: `src` is `(C, X, Y)`, `disp` is
/// `(X, Y)`; samples at `(x + sign * disp, y)`.
pub(crate) fn warp_graph(g: &mut Graph, src: Var, disp: Var, sign: f64) -> Result<Var> {
    let (nx, ny) = (g.shape(disp)[0], g.shape(disp)[1]);
    let xs = g.constant(Tensor::from_fn(vec![1, nx, ny], |i| i[1] as f64))?;
    let ys = g.constant(Tensor::from_fn(vec![1, nx, ny], |i| i[2] as f64))?;
    let d = g.reshape(disp, &[1, nx, ny])?;
    let shift = if sign == 1.0 { d } else { g.scale(d, sign)? };
    let gx = g.add(xs, shift)?;
    let grid = g.concat(&[gx, ys], 0)?;
    Ok(g.bilinear_sample(src, grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_disparity_warp_is_identity() {
        let img = Image::from_fn(5, 4, 2, |x, y, c| (x * 7 + y * 3 + c) as f64 / 40.0);
        let d = DisparityMap::constant(5, 4, 0.0);
        assert_eq!(warp_source_to_center(&img, &d, Side::Left).unwrap(), img);
        assert_eq!(warp_source_to_center(&img, &d, Side::Right).unwrap(), img);
    }

    #[test]
    fn constant_image_is_warp_invariant() {
        let img = Image::constant(6, 6, 3, 0.37);
        let d = DisparityMap::from_fn(6, 6, |x, y| x as f64 * 0.7 - y as f64 * 1.3);
        for side in [Side::Left, Side::Right] {
            let w = warp_source_to_center(&img, &d, side).unwrap();
            assert!(w.tensor().data().iter().all(|&v| v == 0.37));
        }
    }

    #[test]
    fn ramp_warped_left_by_one() {
        let n = 8;
        let ramp = |x: f64| x / (n as f64 - 1.0);
        let img = Image::from_fn(n, 3, 1, |x, _, _| ramp(x as f64));
        let d = DisparityMap::constant(n, 3, 1.0);
        let w = warp_source_to_center(&img, &d, Side::Left).unwrap();
        for x in 0..n - 1 {
            for y in 0..3 {
                assert!((w.at(x, y, 0) - ramp(x as f64 + 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finalize_row_divides_by_baseline() {
        let combo = ViewCombination::new((3, 3), Orientation::Row, 3).unwrap();
        let d = DisparityMap::constant(4, 4, 3.0);
        let out = finalize_disparity(&d, &combo).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn finalize_unit_baseline_is_identity() {
        let combo = ViewCombination::new((1, 1), Orientation::Row, 1).unwrap();
        let d = DisparityMap::from_fn(3, 5, |x, y| (x * 5 + y) as f64 * 0.1);
        assert_eq!(finalize_disparity(&d, &combo).unwrap(), d);
    }
}
