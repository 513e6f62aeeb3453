//! Forward kernels and their vector-Jacobian products.
//!
//! Every op is a pure function of its input tensors and attributes. The
//! backward half receives the saved inputs, the saved output and the upstream
//! gradient and returns one optional gradient per input.

mod conv;
mod elementwise;
mod pool;
mod reduce;
mod sample;
mod shape;

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub use conv::{conv2d, conv3d, ConvAttrs};
pub use pool::{avg_pool2d, upsample_nearest2d, upsample_trilinear3d};
pub use reduce::{inner_product, softmax, variance};
pub use sample::bilinear_sample;
pub use shape::{concat, rotate90, spatial_gradient};

/// One differentiable operation together with its attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    ScalarMul(f64),
    AddScalar(f64),
    Abs,
    Exp,
    LeakyRelu(f64),
    /// Inputs: `(Cin, X, Y)`, weight `(Cout, Cin, kx, ky)`, optional bias `(Cout)`.
    Conv2d(ConvAttrs),
    /// Inputs: `(Cin, D, X, Y)`, weight `(Cout, Cin, kd, kx, ky)`, optional bias `(Cout)`.
    Conv3d(ConvAttrs),
    /// Sum over `axes`; an empty list reduces everything to a scalar.
    Sum(Vec<usize>),
    Mean(Vec<usize>),
    /// Population variance along one axis, which is removed.
    Variance(usize),
    Softmax(usize),
    /// Contracts `axis` against a constant weight vector.
    InnerProduct { axis: usize, weights: Vec<f64> },
    /// Inputs: source `(C, X, Y)` and absolute sample positions `(2, X', Y')`.
    BilinearSample,
    Concat(usize),
    /// Valid (unpadded) average pooling over the last two axes.
    AvgPool2d { kernel: usize, stride: usize },
    UpsampleNearest2d { size: [usize; 2] },
    UpsampleTrilinear3d { size: [usize; 3] },
    /// Forward difference along `axis`, zero at the last index.
    SpatialGradient(usize),
    /// Counterclockwise quarter turns in the plane of `axes`.
    Rotate90 { k: i32, axes: [usize; 2] },
    Reshape(Vec<usize>),
    /// Broadcast axes of length 1 to the target shape (same rank).
    Expand(Vec<usize>),
    Slice { axis: usize, start: usize, end: usize },
}

/// Attribute-free identifier of an [`Op`], parseable from its kebab-case name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    ScalarMul,
    AddScalar,
    Abs,
    Exp,
    LeakyRelu,
    Conv2d,
    Conv3d,
    SumReduce,
    MeanReduce,
    VarianceReduce,
    Softmax,
    InnerProduct,
    BilinearSample,
    Concat,
    AvgPool,
    UpsampleNearest,
    UpsampleTrilinear,
    SpatialGradient,
    Rotate90,
    Reshape,
    Expand,
    Slice,
}

impl OpKind {
    pub const ALL: [OpKind; 26] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::ScalarMul,
        OpKind::AddScalar,
        OpKind::Abs,
        OpKind::Exp,
        OpKind::LeakyRelu,
        OpKind::Conv2d,
        OpKind::Conv3d,
        OpKind::SumReduce,
        OpKind::MeanReduce,
        OpKind::VarianceReduce,
        OpKind::Softmax,
        OpKind::InnerProduct,
        OpKind::BilinearSample,
        OpKind::Concat,
        OpKind::AvgPool,
        OpKind::UpsampleNearest,
        OpKind::UpsampleTrilinear,
        OpKind::SpatialGradient,
        OpKind::Rotate90,
        OpKind::Reshape,
        OpKind::Expand,
        OpKind::Slice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::ScalarMul => "scalar-mul",
            OpKind::AddScalar => "add-scalar",
            OpKind::Abs => "abs",
            OpKind::Exp => "exp",
            OpKind::LeakyRelu => "leaky-relu",
            OpKind::Conv2d => "conv2d",
            OpKind::Conv3d => "conv3d",
            OpKind::SumReduce => "sum-reduce",
            OpKind::MeanReduce => "mean-reduce",
            OpKind::VarianceReduce => "variance-reduce",
            OpKind::Softmax => "softmax",
            OpKind::InnerProduct => "inner-product",
            OpKind::BilinearSample => "bilinear-sample",
            OpKind::Concat => "concat",
            OpKind::AvgPool => "avg-pool",
            OpKind::UpsampleNearest => "upsample-nearest",
            OpKind::UpsampleTrilinear => "upsample-trilinear",
            OpKind::SpatialGradient => "spatial-gradient",
            OpKind::Rotate90 => "rotate90",
            OpKind::Reshape => "reshape",
            OpKind::Expand => "expand",
            OpKind::Slice => "slice",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| TensorError::UnknownOp(s.to_string()))
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Add => OpKind::Add,
            Op::Sub => OpKind::Sub,
            Op::Mul => OpKind::Mul,
            Op::Div => OpKind::Div,
            Op::ScalarMul(_) => OpKind::ScalarMul,
            Op::AddScalar(_) => OpKind::AddScalar,
            Op::Abs => OpKind::Abs,
            Op::Exp => OpKind::Exp,
            Op::LeakyRelu(_) => OpKind::LeakyRelu,
            Op::Conv2d(_) => OpKind::Conv2d,
            Op::Conv3d(_) => OpKind::Conv3d,
            Op::Sum(_) => OpKind::SumReduce,
            Op::Mean(_) => OpKind::MeanReduce,
            Op::Variance(_) => OpKind::VarianceReduce,
            Op::Softmax(_) => OpKind::Softmax,
            Op::InnerProduct { .. } => OpKind::InnerProduct,
            Op::BilinearSample => OpKind::BilinearSample,
            Op::Concat(_) => OpKind::Concat,
            Op::AvgPool2d { .. } => OpKind::AvgPool,
            Op::UpsampleNearest2d { .. } => OpKind::UpsampleNearest,
            Op::UpsampleTrilinear3d { .. } => OpKind::UpsampleTrilinear,
            Op::SpatialGradient(_) => OpKind::SpatialGradient,
            Op::Rotate90 { .. } => OpKind::Rotate90,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Expand(_) => OpKind::Expand,
            Op::Slice { .. } => OpKind::Slice,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn check_arity(&self, got: usize) -> Result<()> {
        let ok = match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::BilinearSample => got == 2,
            Op::Conv2d(_) | Op::Conv3d(_) => got == 2 || got == 3,
            Op::Concat(_) => got >= 1,
            _ => got == 1,
        };
        if ok {
            Ok(())
        } else {
            let expected = match self {
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::BilinearSample | Op::Conv2d(_) | Op::Conv3d(_) => 2,
                _ => 1,
            };
            Err(TensorError::Arity {
                op: self.name(),
                expected,
                got,
            })
        }
    }

    /// Evaluates the op on concrete inputs.
    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        self.check_arity(inputs.len())?;
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => elementwise::binary(self, inputs[0], inputs[1]),
            Op::ScalarMul(c) => Ok(inputs[0].map(|v| v * c)),
            Op::AddScalar(c) => Ok(inputs[0].map(|v| v + c)),
            Op::Abs => Ok(inputs[0].map(f64::abs)),
            Op::Exp => Ok(inputs[0].map(f64::exp)),
            Op::LeakyRelu(slope) => Ok(inputs[0].map(|v| if v > 0.0 { v } else { slope * v })),
            Op::Conv2d(a) => conv::conv2d(inputs[0], inputs[1], inputs.get(2).copied(), a),
            Op::Conv3d(a) => conv::conv3d(inputs[0], inputs[1], inputs.get(2).copied(), a),
            Op::Sum(axes) => reduce::sum(inputs[0], axes, false),
            Op::Mean(axes) => reduce::sum(inputs[0], axes, true),
            Op::Variance(axis) => reduce::variance(inputs[0], *axis),
            Op::Softmax(axis) => reduce::softmax(inputs[0], *axis),
            Op::InnerProduct { axis, weights } => reduce::inner_product(inputs[0], *axis, weights),
            Op::BilinearSample => sample::bilinear_sample(inputs[0], inputs[1]),
            Op::Concat(axis) => shape::concat(inputs, *axis),
            Op::AvgPool2d { kernel, stride } => pool::avg_pool2d(inputs[0], *kernel, *stride),
            Op::UpsampleNearest2d { size } => pool::upsample_nearest2d(inputs[0], *size),
            Op::UpsampleTrilinear3d { size } => pool::upsample_trilinear3d(inputs[0], *size),
            Op::SpatialGradient(axis) => shape::spatial_gradient(inputs[0], *axis),
            Op::Rotate90 { k, axes } => shape::rotate90(inputs[0], *k, *axes),
            Op::Reshape(s) => shape::reshape(inputs[0], s),
            Op::Expand(s) => shape::expand(inputs[0], s),
            Op::Slice { axis, start, end } => shape::slice(inputs[0], *axis, *start, *end),
        }
    }

    /// Vector-Jacobian product: gradients of each input given `grad` of the output.
    pub fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                elementwise::binary_backward(self, inputs[0], inputs[1], grad)
            }
            Op::ScalarMul(c) => vec![grad.map(|g| g * c)],
            Op::AddScalar(_) => vec![grad.clone()],
            Op::Abs => vec![grad.zip_map(inputs[0], |g, x| {
                if x > 0.0 {
                    g
                } else if x < 0.0 {
                    -g
                } else {
                    0.0
                }
            })],
            Op::Exp => vec![grad.zip_map(output, |g, y| g * y)],
            Op::LeakyRelu(slope) => {
                vec![grad.zip_map(inputs[0], |g, x| if x > 0.0 { g } else { slope * g })]
            }
            Op::Conv2d(a) => conv::conv2d_backward(inputs[0], inputs[1], inputs.len() == 3, a, grad),
            Op::Conv3d(a) => conv::conv3d_backward(inputs[0], inputs[1], inputs.len() == 3, a, grad),
            Op::Sum(axes) => vec![reduce::sum_backward(inputs[0].shape(), axes, false, grad)],
            Op::Mean(axes) => vec![reduce::sum_backward(inputs[0].shape(), axes, true, grad)],
            Op::Variance(axis) => vec![reduce::variance_backward(inputs[0], *axis, grad)],
            Op::Softmax(axis) => vec![reduce::softmax_backward(output, *axis, grad)],
            Op::InnerProduct { axis, weights } => {
                vec![reduce::inner_product_backward(inputs[0].shape(), *axis, weights, grad)]
            }
            Op::BilinearSample => sample::bilinear_sample_backward(inputs[0], inputs[1], grad),
            Op::Concat(axis) => shape::concat_backward(inputs, *axis, grad),
            Op::AvgPool2d { kernel, stride } => {
                vec![pool::avg_pool2d_backward(inputs[0].shape(), *kernel, *stride, grad)]
            }
            Op::UpsampleNearest2d { .. } => {
                vec![pool::upsample_nearest2d_backward(inputs[0].shape(), grad)]
            }
            Op::UpsampleTrilinear3d { .. } => {
                vec![pool::upsample_trilinear3d_backward(inputs[0].shape(), grad)]
            }
            Op::SpatialGradient(axis) => vec![shape::spatial_gradient_backward(grad, *axis)],
            Op::Rotate90 { k, axes } => vec![shape::rotate90(grad, -k, *axes)
                .expect("rotation of a gradient with the output's shape is valid")],
            Op::Reshape(_) => vec![grad
                .clone()
                .reshape(inputs[0].shape().to_vec())
                .expect("reshape back to input shape")],
            Op::Expand(_) => vec![shape::expand_backward(inputs[0].shape(), grad)],
            Op::Slice { axis, start, .. } => {
                vec![shape::slice_backward(inputs[0].shape(), *axis, *start, grad)]
            }
        }
    }
}

pub(crate) fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        Err(TensorError::AxisOutOfRange {
            op,
            axis,
            shape: shape.to_vec(),
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        Err(TensorError::RankMismatch {
            op,
            expected: rank,
            shape: t.shape().to_vec(),
        })
    } else {
        Ok(())
    }
}
