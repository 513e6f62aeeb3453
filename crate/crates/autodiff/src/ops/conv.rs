//! 2D and 3D convolution via im2col + GEMM.
//!
//! A 2D convolution is evaluated as a 3D one with unit depth, so both share
//! the same lowering and the same backward pass.

use super::check_rank;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Stride, dilation and symmetric zero padding, applied to every spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvAttrs {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvAttrs {
    pub fn new(stride: usize, dilation: usize, padding: usize) -> Self {
        Self {
            stride,
            dilation,
            padding,
        }
    }

    /// Stride 1 with padding that preserves spatial size for an odd kernel.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self::new(1, dilation, dilation * (kernel - 1) / 2)
    }
}

impl Default for ConvAttrs {
    fn default() -> Self {
        Self::new(1, 1, 0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    cout: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    dilation: [usize; 3],
    padding: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn cols(&self) -> usize {
        self.output.iter().product()
    }
}

fn out_len(op: &'static str, n: usize, k: usize, s: usize, dl: usize, p: usize) -> Result<usize> {
    if s == 0 || dl == 0 {
        return Err(TensorError::InvalidAttr {
            op,
            msg: "stride and dilation must be positive".into(),
        });
    }
    let span = dl * (k - 1) + 1;
    if n + 2 * p < span {
        return Err(TensorError::InvalidAttr {
            op,
            msg: format!("kernel span {span} exceeds padded input length {}", n + 2 * p),
        });
    }
    Ok((n + 2 * p - span) / s + 1)
}

fn geometry(op: &'static str, x: &Tensor, w: &Tensor, b: Option<&Tensor>, attrs: &ConvAttrs, three_d: bool) -> Result<Geometry> {
    let rank = if three_d { 4 } else { 3 };
    check_rank(op, x, rank)?;
    check_rank(op, w, rank + 1)?;
    if w.shape()[1] != x.shape()[0] {
        return Err(TensorError::ShapeMismatch {
            op,
            axis: 0,
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let cout = w.shape()[0];
    if let Some(b) = b {
        if b.shape() != [cout] {
            return Err(TensorError::ShapeMismatch {
                op,
                axis: 0,
                lhs: w.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
    }
    let (input, kernel, stride, dilation, padding) = if three_d {
        let s = x.shape();
        let k = w.shape();
        (
            [s[1], s[2], s[3]],
            [k[2], k[3], k[4]],
            [attrs.stride; 3],
            [attrs.dilation; 3],
            [attrs.padding; 3],
        )
    } else {
        let s = x.shape();
        let k = w.shape();
        (
            [1, s[1], s[2]],
            [1, k[2], k[3]],
            [1, attrs.stride, attrs.stride],
            [1, attrs.dilation, attrs.dilation],
            [0, attrs.padding, attrs.padding],
        )
    };
    let mut output = [0; 3];
    for d in 0..3 {
        output[d] = out_len(op, input[d], kernel[d], stride[d], dilation[d], padding[d])?;
    }
    Ok(Geometry {
        cin: x.shape()[0],
        cout,
        input,
        kernel,
        stride,
        dilation,
        padding,
        output,
    })
}

/// Input coordinate touched by output index `o` and kernel tap `k`, if inside.
#[inline]
fn source(o: usize, k: usize, s: usize, dl: usize, p: usize, n: usize) -> Option<usize> {
    let pos = (o * s + k * dl) as isize - p as isize;
    if pos >= 0 && (pos as usize) < n {
        Some(pos as usize)
    } else {
        None
    }
}

/// Visits every (row, column, input offset) triple of the lowered matrix.
fn for_each_tap(g: &Geometry, mut f: impl FnMut(usize, usize)) {
    let [nd, nx, ny] = g.input;
    let [kd, kx, ky] = g.kernel;
    let [od_n, ox_n, oy_n] = g.output;
    let ncols = g.cols();
    let mut row = 0;
    for c in 0..g.cin {
        for a in 0..kd {
            for b in 0..kx {
                for e in 0..ky {
                    let row_base = row * ncols;
                    for od in 0..od_n {
                        let Some(id) = source(od, a, g.stride[0], g.dilation[0], g.padding[0], nd) else {
                            continue;
                        };
                        for ox in 0..ox_n {
                            let Some(ix) = source(ox, b, g.stride[1], g.dilation[1], g.padding[1], nx) else {
                                continue;
                            };
                            let in_base = ((c * nd + id) * nx + ix) * ny;
                            let col_base = row_base + (od * ox_n + ox) * oy_n;
                            for oy in 0..oy_n {
                                if let Some(iy) = source(oy, e, g.stride[2], g.dilation[2], g.padding[2], ny) {
                                    f(col_base + oy, in_base + iy);
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let mut cols = vec![0.0; g.rows() * g.cols()];
    for_each_tap(g, |dst, src| cols[dst] = x[src]);
    cols
}

fn col2im(cols: &[f64], g: &Geometry) -> Vec<f64> {
    let mut x = vec![0.0; g.cin * g.input.iter().product::<usize>()];
    for_each_tap(g, |src, dst| x[dst] += cols[src]);
    x
}

/// `c = a · b` for row-major `a: m×k`, `b: k×n`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover every element addressed by the given extents
    // and strides; `c` is a distinct, densely packed m×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, g: &Geometry, three_d: bool) -> Result<Tensor> {
    let cols = im2col(x.data(), g);
    let (k, n) = (g.rows(), g.cols());
    let mut out = vec![0.0; g.cout * n];
    gemm(g.cout, k, n, w.data(), k, 1, &cols, n, 1, &mut out);
    if let Some(b) = b {
        for (row, bias) in out.chunks_mut(n).zip(b.data()) {
            for v in row {
                *v += bias;
            }
        }
    }
    let shape = if three_d {
        vec![g.cout, g.output[0], g.output[1], g.output[2]]
    } else {
        vec![g.cout, g.output[1], g.output[2]]
    };
    Tensor::new(shape, out)
}

fn backward(x: &Tensor, w: &Tensor, has_bias: bool, g: &Geometry, grad: &Tensor) -> Vec<Tensor> {
    let (k, n) = (g.rows(), g.cols());
    let gd = grad.data();
    let cols = im2col(x.data(), g);

    // dW = G · colsᵀ
    let mut gw = vec![0.0; g.cout * k];
    gemm(g.cout, n, k, gd, n, 1, &cols, 1, n, &mut gw);

    // dcols = Wᵀ · G
    let mut gcols = vec![0.0; k * n];
    gemm(k, g.cout, n, w.data(), 1, k, gd, n, 1, &mut gcols);
    let gx = col2im(&gcols, g);

    let mut grads = vec![
        Tensor::new(x.shape().to_vec(), gx).expect("input shape"),
        Tensor::new(w.shape().to_vec(), gw).expect("weight shape"),
    ];
    if has_bias {
        let gb = gd.chunks(n).map(|row| row.iter().sum()).collect();
        grads.push(Tensor::new(vec![g.cout], gb).expect("bias shape"));
    }
    grads
}

/// 2D convolution of `(Cin, X, Y)` with weights `(Cout, Cin, kx, ky)`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, attrs: &ConvAttrs) -> Result<Tensor> {
    let g = geometry("conv2d", x, w, b, attrs, false)?;
    forward(x, w, b, &g, false)
}

/// 3D convolution of `(Cin, D, X, Y)` with weights `(Cout, Cin, kd, kx, ky)`.
pub fn conv3d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, attrs: &ConvAttrs) -> Result<Tensor> {
    let g = geometry("conv3d", x, w, b, attrs, true)?;
    forward(x, w, b, &g, true)
}

pub(super) fn conv2d_backward(x: &Tensor, w: &Tensor, has_bias: bool, attrs: &ConvAttrs, grad: &Tensor) -> Vec<Tensor> {
    let g = geometry("conv2d", x, w, None, attrs, false).expect("validated in forward");
    backward(x, w, has_bias, &g, grad)
}

pub(super) fn conv3d_backward(x: &Tensor, w: &Tensor, has_bias: bool, attrs: &ConvAttrs, grad: &Tensor) -> Vec<Tensor> {
    let g = geometry("conv3d", x, w, None, attrs, true).expect("validated in forward");
    backward(x, w, has_bias, &g, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop 2D convolution used as an oracle.
    fn naive_conv2d(x: &Tensor, w: &Tensor, a: &ConvAttrs) -> Tensor {
        let (cin, nx, ny) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, kx, ky) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let ox = (nx + 2 * a.padding - a.dilation * (kx - 1) - 1) / a.stride + 1;
        let oy = (ny + 2 * a.padding - a.dilation * (ky - 1) - 1) / a.stride + 1;
        Tensor::from_fn(vec![cout, ox, oy], |i| {
            let mut acc = 0.0;
            for c in 0..cin {
                for p in 0..kx {
                    for q in 0..ky {
                        let sx = (i[1] * a.stride + p * a.dilation) as isize - a.padding as isize;
                        let sy = (i[2] * a.stride + q * a.dilation) as isize - a.padding as isize;
                        if sx >= 0 && sy >= 0 && (sx as usize) < nx && (sy as usize) < ny {
                            acc += w.at(&[i[0], c, p, q]) * x.at(&[c, sx as usize, sy as usize]);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_naive_loops() {
        let x = Tensor::from_fn(vec![2, 7, 6], |i| ((i[0] * 31 + i[1] * 7 + i[2] * 3) % 11) as f64 - 5.0);
        let w = Tensor::from_fn(vec![3, 2, 3, 3], |i| ((i[0] + 2 * i[1] + 3 * i[2] + 5 * i[3]) % 7) as f64 - 3.0);
        for attrs in [ConvAttrs::new(1, 1, 1), ConvAttrs::new(2, 1, 1), ConvAttrs::new(1, 2, 2), ConvAttrs::new(1, 1, 0)] {
            let got = conv2d(&x, &w, None, &attrs).unwrap();
            let want = naive_conv2d(&x, &w, &attrs);
            assert_eq!(got.shape(), want.shape(), "{attrs:?}");
            assert!(got.max_abs_diff(&want) < 1e-12, "{attrs:?}");
        }
    }

    #[test]
    fn conv3d_matches_naive_loops() {
        let x = Tensor::from_fn(vec![2, 5, 6, 4], |i| ((i[0] * 13 + i[1] * 5 + i[2] * 3 + i[3]) % 9) as f64 - 4.0);
        let w = Tensor::from_fn(vec![2, 2, 3, 3, 3], |i| ((i[0] + i[1] * 2 + i[2] * 3 + i[3] + i[4] * 5) % 5) as f64 - 2.0);
        for attrs in [ConvAttrs::new(1, 1, 1), ConvAttrs::new(2, 1, 1)] {
            let got = conv3d(&x, &w, None, &attrs).unwrap();
            let o = |n: usize| (n + 2 * attrs.padding - 3) / attrs.stride + 1;
            let want = Tensor::from_fn(vec![2, o(5), o(6), o(4)], |i| {
                let mut acc = 0.0;
                for c in 0..2 {
                    for a in 0..3 {
                        for b in 0..3 {
                            for e in 0..3 {
                                let p = |o: usize, k: usize| (o * attrs.stride + k) as isize - attrs.padding as isize;
                                let (d, sx, sy) = (p(i[1], a), p(i[2], b), p(i[3], e));
                                if d >= 0 && sx >= 0 && sy >= 0 && d < 5 && sx < 6 && sy < 4 {
                                    acc += w.at(&[i[0], c, a, b, e]) * x.at(&[c, d as usize, sx as usize, sy as usize]);
                                }
                            }
                        }
                    }
                }
                acc
            });
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::zeros(vec![3, 4, 4]);
        let w = Tensor::zeros(vec![2, 2, 3, 3]);
        assert!(matches!(
            conv2d(&x, &w, None, &ConvAttrs::same(3, 1)),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let x = Tensor::zeros(vec![1, 3, 3]);
        let w = Tensor::zeros(vec![2, 1, 1, 1]);
        let b = Tensor::new(vec![2], vec![1.5, -2.0]).unwrap();
        let y = conv2d(&x, &w, Some(&b), &ConvAttrs::default()).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 1.5));
        assert!(y.data()[9..].iter().all(|&v| v == -2.0));
    }
}
