//! Dense `f64` tensors and a tape-based reverse-mode autodiff engine covering
//! the operation set used by the lfdepth disparity pipeline.
//!
//! ```
//! use lfdepth_autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq, &[]).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0]);
//! ```

mod error;
pub mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::{ConvAttrs, Op, OpKind};
pub use tensor::Tensor;
