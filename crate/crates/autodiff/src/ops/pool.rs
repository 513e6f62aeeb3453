use crate::error::{Result, TensorError};
use crate::tensor::{split_axis, Tensor};

fn trailing(op: &'static str, x: &Tensor, n: usize) -> Result<usize> {
    if x.rank() < n {
        return Err(TensorError::RankMismatch {
            op,
            expected: n,
            shape: x.shape().to_vec(),
        });
    }
    Ok(x.rank() - n)
}

/// Valid average pooling over the last two axes.
pub fn avg_pool2d(x: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    let lead = trailing("avg-pool", x, 2)?;
    let (nx, ny) = (x.shape()[lead], x.shape()[lead + 1]);
    if kernel == 0 || stride == 0 || kernel > nx || kernel > ny {
        return Err(TensorError::InvalidAttr {
            op: "avg-pool",
            msg: format!("kernel {kernel} / stride {stride} invalid for {nx}x{ny}"),
        });
    }
    let (ox, oy) = ((nx - kernel) / stride + 1, (ny - kernel) / stride + 1);
    let planes: usize = x.shape()[..lead].iter().product();
    let inv = 1.0 / (kernel * kernel) as f64;
    let src = x.data();
    let mut out = vec![0.0; planes * ox * oy];
    for p in 0..planes {
        let s = &src[p * nx * ny..(p + 1) * nx * ny];
        for i in 0..ox {
            for j in 0..oy {
                let mut acc = 0.0;
                for a in 0..kernel {
                    let row = (i * stride + a) * ny + j * stride;
                    acc += s[row..row + kernel].iter().sum::<f64>();
                }
                out[(p * ox + i) * oy + j] = acc * inv;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[lead] = ox;
    shape[lead + 1] = oy;
    Tensor::new(shape, out)
}

pub(super) fn avg_pool2d_backward(shape: &[usize], kernel: usize, stride: usize, g: &Tensor) -> Tensor {
    let lead = shape.len() - 2;
    let (nx, ny) = (shape[lead], shape[lead + 1]);
    let (ox, oy) = (g.shape()[lead], g.shape()[lead + 1]);
    let planes: usize = shape[..lead].iter().product();
    let inv = 1.0 / (kernel * kernel) as f64;
    let gd = g.data();
    let mut out = vec![0.0; planes * nx * ny];
    for p in 0..planes {
        let d = &mut out[p * nx * ny..(p + 1) * nx * ny];
        for i in 0..ox {
            for j in 0..oy {
                let gv = gd[(p * ox + i) * oy + j] * inv;
                for a in 0..kernel {
                    let row = (i * stride + a) * ny + j * stride;
                    for v in &mut d[row..row + kernel] {
                        *v += gv;
                    }
                }
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("input shape")
}

/// Nearest-neighbour resize of the last two axes: `src = floor(dst * n / m)`.
pub fn upsample_nearest2d(x: &Tensor, size: [usize; 2]) -> Result<Tensor> {
    let lead = trailing("upsample-nearest", x, 2)?;
    if size.contains(&0) {
        return Err(TensorError::InvalidAttr {
            op: "upsample-nearest",
            msg: "target size must be positive".into(),
        });
    }
    let (nx, ny) = (x.shape()[lead], x.shape()[lead + 1]);
    let [ox, oy] = size;
    let planes: usize = x.shape()[..lead].iter().product();
    let src = x.data();
    let mut out = Vec::with_capacity(planes * ox * oy);
    for p in 0..planes {
        for i in 0..ox {
            let si = i * nx / ox;
            for j in 0..oy {
                out.push(src[(p * nx + si) * ny + j * ny / oy]);
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[lead] = ox;
    shape[lead + 1] = oy;
    Tensor::new(shape, out)
}

pub(super) fn upsample_nearest2d_backward(shape: &[usize], g: &Tensor) -> Tensor {
    let lead = shape.len() - 2;
    let (nx, ny) = (shape[lead], shape[lead + 1]);
    let (ox, oy) = (g.shape()[lead], g.shape()[lead + 1]);
    let planes: usize = shape[..lead].iter().product();
    let gd = g.data();
    let mut out = vec![0.0; planes * nx * ny];
    for p in 0..planes {
        for i in 0..ox {
            let si = i * nx / ox;
            for j in 0..oy {
                out[(p * nx + si) * ny + j * ny / oy] += gd[(p * ox + i) * oy + j];
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("input shape")
}

/// Source position and weight for corner-aligned linear resampling.
#[inline]
fn linear_tap(o: usize, n: usize, m: usize) -> (usize, usize, f64) {
    if n == 1 || m == 1 {
        return (0, 0, 0.0);
    }
    let pos = o as f64 * (n - 1) as f64 / (m - 1) as f64;
    let lo = (pos.floor() as usize).min(n - 2);
    (lo, lo + 1, pos - lo as f64)
}

fn resample_axis(x: &Tensor, axis: usize, m: usize) -> Tensor {
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let mut out = vec![0.0; outer * m * inner];
    for o in 0..outer {
        for k in 0..m {
            let (lo, hi, f) = linear_tap(k, n, m);
            let dst = &mut out[(o * m + k) * inner..(o * m + k + 1) * inner];
            let a = &src[(o * n + lo) * inner..(o * n + lo + 1) * inner];
            let b = &src[(o * n + hi) * inner..(o * n + hi + 1) * inner];
            for ((d, &va), &vb) in dst.iter_mut().zip(a).zip(b) {
                *d = (1.0 - f) * va + f * vb;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = m;
    Tensor::new(shape, out).expect("resampled shape")
}

fn resample_axis_adjoint(g: &Tensor, axis: usize, n: usize) -> Tensor {
    let (outer, m, inner) = split_axis(g.shape(), axis);
    let gd = g.data();
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for k in 0..m {
            let (lo, hi, f) = linear_tap(k, n, m);
            let src = &gd[(o * m + k) * inner..(o * m + k + 1) * inner];
            for (i, &gv) in src.iter().enumerate() {
                out[(o * n + lo) * inner + i] += (1.0 - f) * gv;
                out[(o * n + hi) * inner + i] += f * gv;
            }
        }
    }
    let mut shape = g.shape().to_vec();
    shape[axis] = n;
    Tensor::new(shape, out).expect("adjoint shape")
}

/// Corner-aligned trilinear resize of the last three axes.
pub fn upsample_trilinear3d(x: &Tensor, size: [usize; 3]) -> Result<Tensor> {
    let lead = trailing("upsample-trilinear", x, 3)?;
    if size.contains(&0) {
        return Err(TensorError::InvalidAttr {
            op: "upsample-trilinear",
            msg: "target size must be positive".into(),
        });
    }
    let mut t = x.clone();
    for (d, &m) in size.iter().enumerate() {
        t = resample_axis(&t, lead + d, m);
    }
    Ok(t)
}

pub(super) fn upsample_trilinear3d_backward(shape: &[usize], g: &Tensor) -> Tensor {
    let lead = shape.len() - 3;
    let mut t = g.clone();
    for d in (0..3).rev() {
        t = resample_axis_adjoint(&t, lead + d, shape[lead + d]);
    }
    t
}
