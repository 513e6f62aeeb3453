use lfdepth_autodiff::ops::rotate90;
use lfdepth_autodiff::Tensor;

use crate::error::{invalid, Error, Result};

/// A single view, channels-last `(X, Y, C)`. `x` is the horizontal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    tensor: Tensor,
}

impl Image {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(invalid("image", format!("expected (X, Y, C), got {:?}", tensor.shape())));
        }
        Ok(Self { tensor })
    }

    pub fn from_fn(nx: usize, ny: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        Self {
            tensor: Tensor::from_fn(vec![nx, ny, channels], |i| f(i[0], i[1], i[2])),
        }
    }

    pub fn constant(nx: usize, ny: usize, channels: usize, value: f64) -> Self {
        Self {
            tensor: Tensor::full(vec![nx, ny, channels], value),
        }
    }

    pub fn nx(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn ny(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.tensor.data()[(x * self.ny() + y) * self.channels() + c]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    /// Channels-first copy `(C, X, Y)`, the layout used inside the networks.
    pub fn to_chw(&self) -> Tensor {
        let (nx, ny, nc) = (self.nx(), self.ny(), self.channels());
        let src = self.tensor.data();
        let mut out = vec![0.0; src.len()];
        for p in 0..nx * ny {
            for c in 0..nc {
                out[c * nx * ny + p] = src[p * nc + c];
            }
        }
        Tensor::new(vec![nc, nx, ny], out).expect("chw shape")
    }

    pub fn from_chw(t: &Tensor) -> Result<Self> {
        if t.rank() != 3 {
            return Err(invalid("image", format!("expected (C, X, Y), got {:?}", t.shape())));
        }
        let (nc, nx, ny) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for c in 0..nc {
            for p in 0..nx * ny {
                out[p * nc + c] = src[c * nx * ny + p];
            }
        }
        Self::new(Tensor::new(vec![nx, ny, nc], out)?)
    }

    /// `k` counterclockwise quarter turns in the (x, y) plane.
    pub fn rotate(&self, k: i32) -> Self {
        Self {
            tensor: rotate90(&self.tensor, k, [0, 1]).expect("image has spatial axes"),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.nx() || y0 + h > self.ny() || w == 0 || h == 0 {
            return Err(invalid(
                "crop",
                format!("{w}x{h} at ({x0}, {y0}) exceeds {}x{}", self.nx(), self.ny()),
            ));
        }
        Ok(Self::from_fn(w, h, self.channels(), |x, y, c| self.at(x0 + x, y0 + y, c)))
    }

    pub(crate) fn check_same_shape(&self, other: &Image, op: &'static str) -> Result<()> {
        if self.tensor.shape() != other.tensor.shape() {
            return Err(Error::Shape {
                op,
                lhs: self.tensor.shape().to_vec(),
                rhs: other.tensor.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Per-pixel disparity `(X, Y)` in pixels per unit angular baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    tensor: Tensor,
}

impl DisparityMap {
    /// Fails unless `tensor` is `(X, Y)` and finite everywhere.
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 2 {
            return Err(invalid("disparity map", format!("expected (X, Y), got {:?}", tensor.shape())));
        }
        if !tensor.is_finite() {
            return Err(Error::NonFinite("disparity map"));
        }
        Ok(Self { tensor })
    }

    pub fn constant(nx: usize, ny: usize, value: f64) -> Self {
        Self {
            tensor: Tensor::full(vec![nx, ny], value),
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            tensor: Tensor::from_fn(vec![nx, ny], |i| f(i[0], i[1])),
        }
    }

    pub fn nx(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn ny(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.tensor.data()[x * self.ny() + y]
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn rotate(&self, k: i32) -> Self {
        Self {
            tensor: rotate90(&self.tensor, k, [0, 1]).expect("map has two axes"),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            tensor: self.tensor.map(f),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.nx() || y0 + h > self.ny() || w == 0 || h == 0 {
            return Err(invalid(
                "crop",
                format!("{w}x{h} at ({x0}, {y0}) exceeds {}x{}", self.nx(), self.ny()),
            ));
        }
        Ok(Self::from_fn(w, h, |x, y| self.at(x0 + x, y0 + y)))
    }

    pub(crate) fn check_aligned(&self, nx: usize, ny: usize, op: &'static str) -> Result<()> {
        if self.nx() != nx || self.ny() != ny {
            return Err(Error::Shape {
                op,
                lhs: vec![self.nx(), self.ny()],
                rhs: vec![nx, ny],
            });
        }
        Ok(())
    }
}
