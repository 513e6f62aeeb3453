use super::check_axis;
use crate::error::{Result, TensorError};
use crate::tensor::{split_axis, Tensor};

pub fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs.first().ok_or(TensorError::Arity {
        op: "concat",
        expected: 1,
        got: 0,
    })?;
    check_axis("concat", first.shape(), axis)?;
    for t in &inputs[1..] {
        let ok = t.rank() == first.rank()
            && t
                .shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(ax, (a, b))| ax == axis || a == b);
        if !ok {
            let bad = t
                .shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .position(|(ax, (a, b))| ax != axis && a != b)
                .unwrap_or(axis);
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                axis: bad,
                lhs: first.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    let total: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    let (outer, _, inner) = split_axis(&shape, axis);
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in inputs {
            let block = t.shape()[axis] * inner;
            out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
        }
    }
    Tensor::new(shape, out)
}

pub(super) fn concat_backward(inputs: &[&Tensor], axis: usize, g: &Tensor) -> Vec<Tensor> {
    let (outer, total, inner) = split_axis(g.shape(), axis);
    let mut grads: Vec<Vec<f64>> = inputs.iter().map(|t| Vec::with_capacity(t.len())).collect();
    let gd = g.data();
    for o in 0..outer {
        let mut start = o * total * inner;
        for (t, dst) in inputs.iter().zip(grads.iter_mut()) {
            let block = t.shape()[axis] * inner;
            dst.extend_from_slice(&gd[start..start + block]);
            start += block;
        }
    }
    inputs
        .iter()
        .zip(grads)
        .map(|(t, d)| Tensor::new(t.shape().to_vec(), d).expect("input shape"))
        .collect()
}

pub(super) fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    x.clone().reshape(shape.to_vec())
}

pub(super) fn expand(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if shape.len() != x.rank() {
        return Err(TensorError::RankMismatch {
            op: "expand",
            expected: shape.len(),
            shape: x.shape().to_vec(),
        });
    }
    for (ax, (&n, &m)) in x.shape().iter().zip(shape).enumerate() {
        if n != m && n != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "expand",
                axis: ax,
                lhs: x.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
    }
    let src_strides = x.strides();
    let xs = x.shape();
    Ok(Tensor::from_fn(shape.to_vec(), |idx| {
        let off: usize = idx
            .iter()
            .zip(xs)
            .zip(&src_strides)
            .map(|((&i, &n), &s)| if n == 1 { 0 } else { i * s })
            .sum();
        x.data()[off]
    }))
}

pub(super) fn expand_backward(shape: &[usize], g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(shape.to_vec());
    let strides = out.strides();
    let gs = g.shape().to_vec();
    let mut idx = vec![0usize; gs.len()];
    for &v in g.data() {
        let off: usize = idx
            .iter()
            .zip(shape)
            .zip(&strides)
            .map(|((&i, &n), &s)| if n == 1 { 0 } else { i * s })
            .sum();
        out.data_mut()[off] += v;
        for ax in (0..gs.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < gs[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

pub(super) fn slice(x: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor> {
    check_axis("slice", x.shape(), axis)?;
    if start >= end || end > x.shape()[axis] {
        return Err(TensorError::InvalidAttr {
            op: "slice",
            msg: format!("range {start}..{end} invalid for axis of length {}", x.shape()[axis]),
        });
    }
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape[axis] = end - start;
    let mut out = Vec::with_capacity(outer * (end - start) * inner);
    for o in 0..outer {
        let base = o * n * inner;
        out.extend_from_slice(&x.data()[base + start * inner..base + end * inner]);
    }
    Tensor::new(shape, out)
}

pub(super) fn slice_backward(shape: &[usize], axis: usize, start: usize, g: &Tensor) -> Tensor {
    let (outer, n, inner) = split_axis(shape, axis);
    let len = g.shape()[axis];
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        let dst = o * n * inner + start * inner;
        let src = o * len * inner;
        out[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
    }
    Tensor::new(shape.to_vec(), out).expect("input shape")
}

/// Rotates by `k` counterclockwise quarter turns in the plane of `axes`.
///
/// Axis `axes[0]` is taken as the horizontal (x) direction. For `k = 1` the
/// output satisfies `out[i, j] = in[A-1-j, i]`, so the top edge moves to the
/// left edge and a shift along `axes[1]` becomes a shift along `axes[0]`.
pub fn rotate90(x: &Tensor, k: i32, axes: [usize; 2]) -> Result<Tensor> {
    let [a, b] = axes;
    check_axis("rotate90", x.shape(), a)?;
    check_axis("rotate90", x.shape(), b)?;
    if a == b {
        return Err(TensorError::InvalidAttr {
            op: "rotate90",
            msg: "rotation axes must differ".into(),
        });
    }
    let k = k.rem_euclid(4);
    let (na, nb) = (x.shape()[a], x.shape()[b]);
    let mut shape = x.shape().to_vec();
    if k % 2 == 1 {
        shape.swap(a, b);
    }
    let mut src = vec![0usize; x.rank()];
    Ok(Tensor::from_fn(shape, |idx| {
        src.copy_from_slice(idx);
        let (i, j) = (idx[a], idx[b]);
        let (sa, sb) = match k {
            0 => (i, j),
            1 => (na - 1 - j, i),
            2 => (na - 1 - i, nb - 1 - j),
            _ => (j, nb - 1 - i),
        };
        src[a] = sa;
        src[b] = sb;
        x.at(&src)
    }))
}

/// Forward difference along `axis`; the last slice is zero (replicate boundary).
pub fn spatial_gradient(x: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("spatial-gradient", x.shape(), axis)?;
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for k in 0..n.saturating_sub(1) {
            for i in 0..inner {
                let off = base + k * inner + i;
                out[off] = src[off + inner] - src[off];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(super) fn spatial_gradient_backward(g: &Tensor, axis: usize) -> Tensor {
    let (outer, n, inner) = split_axis(g.shape(), axis);
    let gd = g.data();
    let mut out = vec![0.0; gd.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for k in 0..n.saturating_sub(1) {
            for i in 0..inner {
                let off = base + k * inner + i;
                out[off] -= gd[off];
                out[off + inner] += gd[off];
            }
        }
    }
    Tensor::new(g.shape().to_vec(), out).expect("same shape")
}
