//! Finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::ops::{ConvAttrs, Op, OpKind};
use crate::tensor::Tensor;

/// Options for [`finite_difference_check`].
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum number of perturbed elements per input; larger inputs are
    /// checked on a seeded random subset.
    pub max_elements: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_elements: usize::MAX,
            seed: 0,
        }
    }
}

/// Compares backprop gradients of the scalar built by `f` against central
/// differences, for every input tensor.
///
/// Returns the max over checked elements of `|analytic - numeric| / max(1, |numeric|)`.
pub fn finite_difference_check<F>(inputs: &[Tensor], f: F, opts: FdOptions) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = tensors
            .iter()
            .map(|t| g.leaf(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (slot, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[slot].shape().to_vec()));
        let mut indices: Vec<usize> = (0..inputs[slot].len()).collect();
        if indices.len() > opts.max_elements {
            indices.shuffle(&mut rng);
            indices.truncate(opts.max_elements);
        }
        for i in indices {
            let orig = work[slot].data()[i];
            work[slot].data_mut()[i] = orig + opts.step;
            let plus = eval(&work)?;
            work[slot].data_mut()[i] = orig - opts.step;
            let minus = eval(&work)?;
            work[slot].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let rel = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Uniform values with magnitude in `[0.1, 1]` and random sign, keeping
/// inputs off the kink of `abs` and `leaky-relu`.
fn off_kink(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape matches data")
}

fn uniform(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::rand_uniform(shape, -1.0, 1.0, rng)
}

/// A random instance of `kind`: the op with attributes and its inputs.
fn instance(kind: OpKind, rng: &mut ChaCha8Rng) -> (Op, Vec<Tensor>) {
    const N: usize = 8;
    let c = rng.gen_range(1..=3);
    let img = vec![c, N, N];
    match kind {
        OpKind::Add => (Op::Add, vec![uniform(img.clone(), rng), uniform(img, rng)]),
        OpKind::Sub => (Op::Sub, vec![uniform(img.clone(), rng), uniform(img, rng)]),
        OpKind::Mul => (Op::Mul, vec![uniform(img.clone(), rng), uniform(img, rng)]),
        OpKind::Div => {
            let den = Tensor::rand_uniform(img.clone(), 0.5, 2.0, rng);
            (Op::Div, vec![uniform(img, rng), den])
        }
        OpKind::ScalarMul => (Op::ScalarMul(rng.gen_range(-2.0..2.0)), vec![uniform(img, rng)]),
        OpKind::AddScalar => (Op::AddScalar(rng.gen_range(-2.0..2.0)), vec![uniform(img, rng)]),
        OpKind::Abs => (Op::Abs, vec![off_kink(img, rng)]),
        OpKind::Exp => (Op::Exp, vec![uniform(img, rng)]),
        OpKind::LeakyRelu => (Op::LeakyRelu(0.1), vec![off_kink(img, rng)]),
        OpKind::Conv2d => {
            let cout = rng.gen_range(1..=3);
            let attrs = ConvAttrs::new(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(0..=2));
            let w = Tensor::rand_normal(vec![cout, c, 3, 3], 0.5, rng);
            let b = uniform(vec![cout], rng);
            (Op::Conv2d(attrs), vec![uniform(img, rng), w, b])
        }
        OpKind::Conv3d => {
            let cin = rng.gen_range(1..=2);
            let cout = rng.gen_range(1..=2);
            let d = rng.gen_range(4..=5);
            let attrs = ConvAttrs::new(rng.gen_range(1..=2), 1, 1);
            let w = Tensor::rand_normal(vec![cout, cin, 3, 3, 3], 0.3, rng);
            let b = uniform(vec![cout], rng);
            (Op::Conv3d(attrs), vec![uniform(vec![cin, d, N, N], rng), w, b])
        }
        OpKind::SumReduce | OpKind::MeanReduce => {
            let mut axes: Vec<usize> = (0..3).filter(|_| rng.gen_bool(0.5)).collect();
            if axes.len() == 3 {
                axes.clear();
            }
            let op = if kind == OpKind::SumReduce {
                Op::Sum(axes)
            } else {
                Op::Mean(axes)
            };
            (op, vec![uniform(img, rng)])
        }
        OpKind::VarianceReduce => (Op::Variance(rng.gen_range(0..3)), vec![uniform(vec![3, N, N], rng)]),
        OpKind::Softmax => (Op::Softmax(rng.gen_range(0..3)), vec![uniform(img, rng)]),
        OpKind::InnerProduct => {
            let axis = rng.gen_range(0..3);
            let weights = (0..img[axis]).map(|_| rng.gen_range(-3.0..3.0)).collect();
            (Op::InnerProduct { axis, weights }, vec![uniform(img, rng)])
        }
        OpKind::BilinearSample => {
            // in-bounds positions with fractional parts away from integers
            let n = 2 * N * N;
            let data = (0..n)
                .map(|_| rng.gen_range(0..(N - 1)) as f64 + rng.gen_range(0.05..0.95))
                .collect();
            let grid = Tensor::new(vec![2, N, N], data).expect("grid shape");
            (Op::BilinearSample, vec![uniform(img, rng), grid])
        }
        OpKind::Concat => {
            let k = rng.gen_range(2..=3);
            let xs = (0..k)
                .map(|_| uniform(vec![rng.gen_range(1..=3), N, N], rng))
                .collect();
            (Op::Concat(0), xs)
        }
        OpKind::AvgPool => (
            Op::AvgPool2d {
                kernel: 3,
                stride: rng.gen_range(1..=2),
            },
            vec![uniform(img, rng)],
        ),
        OpKind::UpsampleNearest => (
            Op::UpsampleNearest2d { size: [N, N] },
            vec![uniform(vec![c, rng.gen_range(3..=5), rng.gen_range(3..=5)], rng)],
        ),
        OpKind::UpsampleTrilinear => (
            Op::UpsampleTrilinear3d { size: [5, N, N] },
            vec![uniform(vec![c, 3, rng.gen_range(3..=5), rng.gen_range(3..=5)], rng)],
        ),
        OpKind::SpatialGradient => (Op::SpatialGradient(rng.gen_range(1..3)), vec![uniform(img, rng)]),
        OpKind::Rotate90 => (
            Op::Rotate90 {
                k: rng.gen_range(-3..=3),
                axes: [1, 2],
            },
            vec![uniform(vec![c, N, N - 2], rng)],
        ),
        OpKind::Reshape => (Op::Reshape(vec![c * N, N]), vec![uniform(img, rng)]),
        OpKind::Expand => (Op::Expand(vec![c, N, N]), vec![uniform(vec![c, 1, N], rng)]),
        OpKind::Slice => {
            let start = rng.gen_range(0..4);
            let end = rng.gen_range(start + 1..=N);
            (Op::Slice { axis: 2, start, end }, vec![uniform(img, rng)])
        }
    }
}

/// Runs `trials` random instances of `kind` and returns the max relative
/// gradient error. The scalar objective is `sum(out * R)` for a fixed random `R`.
pub fn gradcheck(kind: OpKind, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (op, inputs) = instance(kind, &mut rng);
        let refs: Vec<&Tensor> = inputs.iter().collect();
        let out_shape = op.forward(&refs)?.shape().to_vec();
        let probe = Tensor::rand_uniform(out_shape, -1.0, 1.0, &mut rng);
        let err = finite_difference_check(
            &inputs,
            |g, vars| {
                let y = g.apply(op.clone(), vars)?;
                let r = g.constant(probe.clone())?;
                let yr = g.mul(y, r)?;
                g.sum(yr, &[])
            },
            FdOptions::default(),
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_passes() {
        let x = Tensor::new(vec![3], vec![0.3, -0.7, 1.2]).unwrap();
        let err = finite_difference_check(
            &[x],
            |g, v| {
                let sq = g.mul(v[0], v[0])?;
                g.sum(sq, &[])
            },
            FdOptions::default(),
        )
        .unwrap();
        assert!(err < 1e-8);
    }
}
