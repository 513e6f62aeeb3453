use super::check_axis;
use crate::error::{Result, TensorError};
use crate::tensor::{split_axis, Tensor};

fn normalize_axes(op: &'static str, shape: &[usize], axes: &[usize]) -> Result<Vec<bool>> {
    let mut reduced = vec![axes.is_empty(); shape.len()];
    for &ax in axes {
        check_axis(op, shape, ax)?;
        if reduced[ax] {
            return Err(TensorError::InvalidAttr {
                op,
                msg: format!("axis {ax} listed twice"),
            });
        }
        reduced[ax] = true;
    }
    Ok(reduced)
}

/// Calls `f(input_offset, output_offset)` for every input element, where the
/// output drops the axes flagged in `reduced`.
fn for_each_reduced(shape: &[usize], reduced: &[bool], mut f: impl FnMut(usize, usize)) {
    let n: usize = shape.iter().product();
    let rank = shape.len();
    // Output stride per input axis; zero on reduced axes.
    let mut out_stride = vec![0usize; rank];
    let mut acc = 1;
    for ax in (0..rank).rev() {
        if !reduced[ax] {
            out_stride[ax] = acc;
            acc *= shape[ax];
        }
    }
    let mut idx = vec![0usize; rank];
    let mut out_off = 0usize;
    for in_off in 0..n {
        f(in_off, out_off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            out_off += out_stride[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            out_off -= out_stride[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}

fn reduced_shape(shape: &[usize], reduced: &[bool]) -> (Vec<usize>, usize) {
    let out: Vec<usize> = shape
        .iter()
        .zip(reduced)
        .filter(|(_, &r)| !r)
        .map(|(&n, _)| n)
        .collect();
    let count = shape
        .iter()
        .zip(reduced)
        .filter(|(_, &r)| r)
        .map(|(&n, _)| n)
        .product();
    (out, count)
}

pub(super) fn sum(x: &Tensor, axes: &[usize], mean: bool) -> Result<Tensor> {
    let op = if mean { "mean-reduce" } else { "sum-reduce" };
    let reduced = normalize_axes(op, x.shape(), axes)?;
    let (out_shape, count) = reduced_shape(x.shape(), &reduced);
    let mut out = Tensor::zeros(out_shape);
    {
        let src = x.data();
        let dst = out.data_mut();
        for_each_reduced(x.shape(), &reduced, |i, o| dst[o] += src[i]);
    }
    if mean {
        let inv = 1.0 / count as f64;
        for v in out.data_mut() {
            *v *= inv;
        }
    }
    Ok(out)
}

pub(super) fn sum_backward(shape: &[usize], axes: &[usize], mean: bool, g: &Tensor) -> Tensor {
    let reduced = normalize_axes("sum-reduce", shape, axes).expect("validated in forward");
    let (_, count) = reduced_shape(shape, &reduced);
    let scale = if mean { 1.0 / count as f64 } else { 1.0 };
    let mut out = Tensor::zeros(shape.to_vec());
    {
        let dst = out.data_mut();
        let src = g.data();
        for_each_reduced(shape, &reduced, |i, o| dst[i] = src[o] * scale);
    }
    out
}

/// Population variance (divisor `n`) along `axis`; the axis is removed.
pub fn variance(x: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("variance-reduce", x.shape(), axis)?;
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    let src = x.data();
    let mut out = vec![0.0; outer * inner];
    let inv = 1.0 / n as f64;
    // Values are shifted by the first slice so constant slices give exactly 0.
    let mut shifted_mean = vec![0.0; inner];
    for o in 0..outer {
        let base = o * n * inner;
        let first = &src[base..base + inner];
        let row = &mut out[o * inner..(o + 1) * inner];
        shifted_mean.iter_mut().for_each(|m| *m = 0.0);
        for k in 1..n {
            let s = &src[base + k * inner..base + (k + 1) * inner];
            for ((m, v), f) in shifted_mean.iter_mut().zip(s).zip(first) {
                *m += v - f;
            }
        }
        for m in shifted_mean.iter_mut() {
            *m *= inv;
        }
        for k in 0..n {
            let s = &src[base + k * inner..base + (k + 1) * inner];
            for (((r, v), m), f) in row.iter_mut().zip(s).zip(&shifted_mean).zip(first) {
                let d = (v - f) - m;
                *r += d * d;
            }
        }
        for r in row.iter_mut() {
            *r *= inv;
        }
    }
    Tensor::new(shape, out)
}

pub(super) fn variance_backward(x: &Tensor, axis: usize, g: &Tensor) -> Tensor {
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let gd = g.data();
    let mut out = vec![0.0; src.len()];
    let inv = 1.0 / n as f64;
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let mean: f64 = (0..n).map(|k| src[base + k * inner + i]).sum::<f64>() * inv;
            let gi = gd[o * inner + i] * 2.0 * inv;
            for k in 0..n {
                let off = base + k * inner + i;
                out[off] = gi * (src[off] - mean);
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape as input")
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("softmax", x.shape(), axis)?;
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let max = (0..n)
                .map(|k| src[base + k * inner + i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..n {
                let off = base + k * inner + i;
                let e = (src[off] - max).exp();
                out[off] = e;
                total += e;
            }
            let inv = 1.0 / total;
            for k in 0..n {
                out[base + k * inner + i] *= inv;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(super) fn softmax_backward(y: &Tensor, axis: usize, g: &Tensor) -> Tensor {
    let (outer, n, inner) = split_axis(y.shape(), axis);
    let yd = y.data();
    let gd = g.data();
    let mut out = vec![0.0; yd.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let dot: f64 = (0..n)
                .map(|k| {
                    let off = base + k * inner + i;
                    gd[off] * yd[off]
                })
                .sum();
            for k in 0..n {
                let off = base + k * inner + i;
                out[off] = yd[off] * (gd[off] - dot);
            }
        }
    }
    Tensor::new(y.shape().to_vec(), out).expect("same shape as output")
}

/// Contracts `axis` of `x` against the constant vector `weights`.
pub fn inner_product(x: &Tensor, axis: usize, weights: &[f64]) -> Result<Tensor> {
    check_axis("inner-product", x.shape(), axis)?;
    let (outer, n, inner) = split_axis(x.shape(), axis);
    if weights.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "inner-product",
            axis,
            lhs: x.shape().to_vec(),
            rhs: vec![weights.len()],
        });
    }
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    let src = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let row = &mut out[o * inner..(o + 1) * inner];
        for (k, w) in weights.iter().enumerate() {
            let s = &src[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (r, v) in row.iter_mut().zip(s) {
                *r += w * v;
            }
        }
    }
    Tensor::new(shape, out)
}

pub(super) fn inner_product_backward(shape: &[usize], axis: usize, weights: &[f64], g: &Tensor) -> Tensor {
    let (outer, n, inner) = split_axis(shape, axis);
    let gd = g.data();
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        let grow = &gd[o * inner..(o + 1) * inner];
        for (k, w) in weights.iter().enumerate() {
            let dst = &mut out[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (d, gv) in dst.iter_mut().zip(grow) {
                *d = w * gv;
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("same shape as input")
}
