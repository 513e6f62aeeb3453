use lfdepth_autodiff::{ConvAttrs, Graph, Var};

use crate::error::Result;
use crate::params::Binding;

pub(crate) const SLOPE: f64 = 0.1;

pub(crate) type Specs = Vec<(String, Vec<usize>)>;

/// Declares `name/w` with shape `[cout, cin, kernel..]` and `name/b`.
pub(crate) fn conv_spec(specs: &mut Specs, name: &str, cout: usize, cin: usize, kernel: &[usize]) {
    let mut shape = vec![cout, cin];
    shape.extend_from_slice(kernel);
    specs.push((format!("{name}/w"), shape));
    specs.push((format!("{name}/b"), vec![cout]));
}

/// 2D or 3D convolution chosen by the weight rank.
pub(crate) fn conv(g: &mut Graph, b: &mut Binding, name: &str, x: Var, attrs: ConvAttrs) -> Result<Var> {
    let w = b.var(g, &format!("{name}/w"))?;
    let bias = b.var(g, &format!("{name}/b"))?;
    Ok(if g.shape(w).len() == 4 {
        g.conv2d(x, w, Some(bias), attrs)?
    } else {
        g.conv3d(x, w, Some(bias), attrs)?
    })
}

pub(crate) fn lrelu(g: &mut Graph, x: Var) -> Result<Var> {
    Ok(g.leaky_relu(x, SLOPE)?)
}

/// `lrelu(x + conv_b(lrelu(conv_a(x))))` with same-size 3x3 convolutions.
pub(crate) fn residual_block(g: &mut Graph, b: &mut Binding, name: &str, x: Var) -> Result<Var> {
    let same = ConvAttrs::same(3, 1);
    let t = conv(g, b, &format!("{name}/a"), x, same)?;
    let t = lrelu(g, t)?;
    let t = conv(g, b, &format!("{name}/b"), t, same)?;
    let s = g.add(x, t)?;
    lrelu(g, s)
}

pub(crate) fn residual_block_spec(specs: &mut Specs, name: &str, channels: usize, kernel: &[usize]) {
    conv_spec(specs, &format!("{name}/a"), channels, channels, kernel);
    conv_spec(specs, &format!("{name}/b"), channels, channels, kernel);
}
