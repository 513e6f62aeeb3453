use super::Op;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        return Ok(());
    }
    let axis = a
        .shape()
        .iter()
        .zip(b.shape())
        .position(|(x, y)| x != y)
        .unwrap_or_else(|| a.rank().min(b.rank()));
    Err(TensorError::ShapeMismatch {
        op,
        axis,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })
}

pub(super) fn binary(op: &Op, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(op.name(), a, b)?;
    Ok(match op {
        Op::Add => a.zip_map(b, |x, y| x + y),
        Op::Sub => a.zip_map(b, |x, y| x - y),
        Op::Mul => a.zip_map(b, |x, y| x * y),
        Op::Div => a.zip_map(b, |x, y| x / y),
        _ => unreachable!("not a binary op"),
    })
}

pub(super) fn binary_backward(op: &Op, a: &Tensor, b: &Tensor, g: &Tensor) -> Vec<Tensor> {
    match op {
        Op::Add => vec![g.clone(), g.clone()],
        Op::Sub => vec![g.clone(), g.map(|v| -v)],
        Op::Mul => vec![g.zip_map(b, |g, y| g * y), g.zip_map(a, |g, x| g * x)],
        Op::Div => {
            let ga = g.zip_map(b, |g, y| g / y);
            let mut gb = g.zip_map(a, |g, x| g * x);
            for (v, y) in gb.data_mut().iter_mut().zip(b.data()) {
                *v = -*v / (y * y);
            }
            vec![ga, gb]
        }
        _ => unreachable!("not a binary op"),
    }
}
