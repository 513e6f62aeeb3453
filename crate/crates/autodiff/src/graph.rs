//! Append-only computation graph with reverse-mode differentiation.
//!
//! Nodes are stored in creation order, so inputs always precede the nodes
//! that consume them and a single reverse sweep visits each node once.

use crate::error::{Result, TensorError};
use crate::ops::{ConvAttrs, Op};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    op: Option<Op>,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    frozen: bool,
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node) -> Result<Var> {
        if self.frozen {
            return Err(TensorError::GraphFrozen);
        }
        self.nodes.push(node);
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf: receives a gradient in [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(Node {
            op: None,
            inputs: Vec::new(),
            value,
            requires_grad: true,
        })
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Node {
            op: None,
            inputs: Vec::new(),
            value,
            requires_grad: false,
        })
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Evaluates `op` on the given inputs and records it.
    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.frozen {
            return Err(TensorError::GraphFrozen);
        }
        for v in inputs {
            if v.0 >= self.nodes.len() {
                return Err(TensorError::UnknownVar(v.0));
            }
        }
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = op.forward(&values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Node {
            op: Some(op),
            inputs: inputs.to_vec(),
            value,
            requires_grad,
        })
    }

    /// Accumulates d(loss)/d(leaf) for every trainable leaf.
    ///
    /// The graph is frozen afterwards; further ops return [`TensorError::GraphFrozen`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.frozen {
            return Err(TensorError::GraphFrozen);
        }
        let loss_node = self.nodes.get(loss.0).ok_or(TensorError::UnknownVar(loss.0))?;
        if loss_node.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        self.frozen = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_node.value.shape().to_vec(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(op) = &node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = op.backward(&inputs, &node.value, &g);
            for (v, ig) in node.inputs.iter().zip(input_grads) {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }
        // Keep only leaf gradients.
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.op.is_some() || !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    // Typed wrappers around `apply`.

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Div, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Op::ScalarMul(c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Op::AddScalar(c), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Abs, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Exp, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.apply(Op::LeakyRelu(slope), &[a])
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, attrs: ConvAttrs) -> Result<Var> {
        match b {
            Some(b) => self.apply(Op::Conv2d(attrs), &[x, w, b]),
            None => self.apply(Op::Conv2d(attrs), &[x, w]),
        }
    }

    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, attrs: ConvAttrs) -> Result<Var> {
        match b {
            Some(b) => self.apply(Op::Conv3d(attrs), &[x, w, b]),
            None => self.apply(Op::Conv3d(attrs), &[x, w]),
        }
    }

    pub fn sum(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.apply(Op::Sum(axes.to_vec()), &[a])
    }

    pub fn mean(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.apply(Op::Mean(axes.to_vec()), &[a])
    }

    pub fn variance(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(Op::Variance(axis), &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(Op::Softmax(axis), &[a])
    }

    pub fn inner_product(&mut self, a: Var, axis: usize, weights: &[f64]) -> Result<Var> {
        self.apply(
            Op::InnerProduct {
                axis,
                weights: weights.to_vec(),
            },
            &[a],
        )
    }

    pub fn bilinear_sample(&mut self, x: Var, grid: Var) -> Result<Var> {
        self.apply(Op::BilinearSample, &[x, grid])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Op::Concat(axis), xs)
    }

    pub fn avg_pool2d(&mut self, a: Var, kernel: usize, stride: usize) -> Result<Var> {
        self.apply(Op::AvgPool2d { kernel, stride }, &[a])
    }

    pub fn upsample_nearest2d(&mut self, a: Var, size: [usize; 2]) -> Result<Var> {
        self.apply(Op::UpsampleNearest2d { size }, &[a])
    }

    pub fn upsample_trilinear3d(&mut self, a: Var, size: [usize; 3]) -> Result<Var> {
        self.apply(Op::UpsampleTrilinear3d { size }, &[a])
    }

    pub fn spatial_gradient(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(Op::SpatialGradient(axis), &[a])
    }

    pub fn rotate90(&mut self, a: Var, k: i32, axes: [usize; 2]) -> Result<Var> {
        self.apply(Op::Rotate90 { k, axes }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Op::Reshape(shape.to_vec()), &[a])
    }

    pub fn expand(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Op::Expand(shape.to_vec()), &[a])
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.apply(Op::Slice { axis, start, end }, &[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_gradient_is_uniform() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap()).unwrap();
        let loss = g.mean(x, &[]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq, &[]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(vec![3])).unwrap();
        assert_eq!(g.backward(x).unwrap_err(), TensorError::NonScalarLoss(vec![3]));
    }

    #[test]
    fn graph_is_frozen_after_backward() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.exp(x).unwrap_err(), TensorError::GraphFrozen);
        assert_eq!(g.backward(y).unwrap_err(), TensorError::GraphFrozen);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0)).unwrap();
        let c = g.constant(Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, c).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 3.0);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn shared_input_accumulates() {
        // y = x*x + 3x at x = 2 -> dy/dx = 2x + 3 = 7
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0)).unwrap();
        let a = g.mul(x, x).unwrap();
        let b = g.scale(x, 3.0).unwrap();
        let y = g.add(a, b).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 7.0);
    }
}
