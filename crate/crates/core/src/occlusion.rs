//! Per-source confidence maps: which warped view to trust at each pixel.
//!
//! The learned network is a small U-net over the two warped views and the
//! disparity. Its two-channel softmax head makes `O_l + O_r = 1` structural.
//! The closed-form mode is a softmax over negated warping residuals and needs
//! no weights.

use lfdepth_autodiff::{ConvAttrs, Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{DisparityMap, Image};
use crate::nn::{conv, conv_spec, lrelu, residual_block, residual_block_spec, Specs};
use crate::params::{Binding, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccMode {
    Learned,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccNetConfig {
    pub mode: OccMode,
    /// Number of stride-2 downsampling stages.
    pub depth: usize,
    /// Channels at full resolution, doubled per stage up to `max_channels`.
    pub base_channels: usize,
    pub max_channels: usize,
    pub skips: bool,
}

impl Default for OccNetConfig {
    fn default() -> Self {
        Self {
            mode: OccMode::Learned,
            depth: 2,
            base_channels: 8,
            max_channels: 32,
            skips: true,
        }
    }
}

/// `O_l` and `O_r`, each `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePair {
    left: Tensor,
    right: Tensor,
}

impl ConfidencePair {
    pub fn new(left: Tensor, right: Tensor) -> Result<Self> {
        if left.rank() != 2 || left.shape() != right.shape() {
            return Err(Error::Shape {
                op: "confidence pair",
                lhs: left.shape().to_vec(),
                rhs: right.shape().to_vec(),
            });
        }
        if left.data().iter().chain(right.data()).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("confidence pair", "weights must lie in [0, 1]"));
        }
        Ok(Self { left, right })
    }

    /// `O_l = value`, `O_r = 1 - value` everywhere.
    pub fn uniform(nx: usize, ny: usize, value: f64) -> Result<Self> {
        Self::new(Tensor::full(vec![nx, ny], value), Tensor::full(vec![nx, ny], 1.0 - value))
    }

    /// From a `(2, X, Y)` stack.
    pub fn from_stack(t: &Tensor) -> Result<Self> {
        if t.rank() != 3 || t.shape()[0] != 2 {
            return Err(invalid("confidence pair", format!("expected (2, X, Y), got {:?}", t.shape())));
        }
        let (nx, ny) = (t.shape()[1], t.shape()[2]);
        let n = nx * ny;
        Self::new(
            Tensor::new(vec![nx, ny], t.data()[..n].to_vec())?,
            Tensor::new(vec![nx, ny], t.data()[n..].to_vec())?,
        )
    }

    pub fn left(&self) -> &Tensor {
        &self.left
    }

    pub fn right(&self) -> &Tensor {
        &self.right
    }

    pub fn nx(&self) -> usize {
        self.left.shape()[0]
    }

    pub fn ny(&self) -> usize {
        self.left.shape()[1]
    }

    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OccNet {
    cfg: OccNetConfig,
    image_channels: usize,
}

impl OccNet {
    pub fn new(cfg: OccNetConfig, image_channels: usize) -> Result<Self> {
        if image_channels == 0 {
            return Err(invalid("occnet", "images need at least one channel"));
        }
        if cfg.mode == OccMode::Learned && (cfg.base_channels == 0 || cfg.max_channels < cfg.base_channels) {
            return Err(invalid("occnet", "need 0 < base channels <= max channels"));
        }
        Ok(Self { cfg, image_channels })
    }

    pub fn config(&self) -> &OccNetConfig {
        &self.cfg
    }

    fn channels(&self, level: usize) -> usize {
        (self.cfg.base_channels << level.min(16)).min(self.cfg.max_channels)
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Specs::new();
        if self.cfg.mode == OccMode::ClosedForm {
            return specs;
        }
        let c0 = self.channels(0);
        conv_spec(&mut specs, "occnet/stem", c0, 2 * self.image_channels + 1, &[3, 3]);
        residual_block_spec(&mut specs, "occnet/enc0", c0, &[3, 3]);
        for l in 1..=self.cfg.depth {
            let (cp, c) = (self.channels(l - 1), self.channels(l));
            conv_spec(&mut specs, &format!("occnet/down{l}"), c, cp, &[3, 3]);
            residual_block_spec(&mut specs, &format!("occnet/enc{l}"), c, &[3, 3]);
        }
        for l in (0..self.cfg.depth).rev() {
            let (c, cn) = (self.channels(l), self.channels(l + 1));
            conv_spec(&mut specs, &format!("occnet/up{l}"), c, cn, &[3, 3]);
            residual_block_spec(&mut specs, &format!("occnet/dec{l}"), c, &[3, 3]);
        }
        conv_spec(&mut specs, "occnet/head", 2, c0, &[3, 3]);
        specs
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::new();
        store.init_from_specs(&self.param_specs(), rng);
        store
    }

    /// `(2, X, Y)` confidences `[O_l, O_r]` from `(C, X, Y)` warped views,
    /// the `(C, X, Y)` center view (closed-form only) and the `(X, Y)` disparity.
    pub fn confidence_graph(
        &self,
        g: &mut Graph,
        b: &mut Binding,
        lc: Var,
        rc: Var,
        center: Var,
        disparity: Var,
    ) -> Result<Var> {
        let shape = g.shape(lc).to_vec();
        if g.shape(rc) != shape.as_slice() || g.shape(center) != shape.as_slice() {
            return Err(Error::Shape {
                op: "occnet",
                lhs: shape,
                rhs: g.shape(rc).to_vec(),
            });
        }
        let (nx, ny) = (shape[1], shape[2]);
        if g.shape(disparity) != [nx, ny] {
            return Err(Error::Shape {
                op: "occnet",
                lhs: vec![nx, ny],
                rhs: g.shape(disparity).to_vec(),
            });
        }
        let logits = match self.cfg.mode {
            OccMode::ClosedForm => {
                let el = residual(g, lc, center)?;
                let er = residual(g, rc, center)?;
                let both = g.concat(&[el, er], 0)?;
                g.neg(both)?
            }
            OccMode::Learned => {
                let d = g.reshape(disparity, &[1, nx, ny])?;
                let x = g.concat(&[lc, rc, d], 0)?;
                self.unet(g, b, x)?
            }
        };
        Ok(g.softmax(logits, 0)?)
    }

    fn unet(&self, g: &mut Graph, b: &mut Binding, x: Var) -> Result<Var> {
        let same = ConvAttrs::same(3, 1);
        let down = ConvAttrs::new(2, 1, 1);
        let t = conv(g, b, "occnet/stem", x, same)?;
        let t = lrelu(g, t)?;
        let mut t = residual_block(g, b, "occnet/enc0", t)?;
        let mut skips = vec![t];
        for l in 1..=self.cfg.depth {
            t = conv(g, b, &format!("occnet/down{l}"), t, down)?;
            t = lrelu(g, t)?;
            t = residual_block(g, b, &format!("occnet/enc{l}"), t)?;
            skips.push(t);
        }
        skips.pop();
        for l in (0..self.cfg.depth).rev() {
            let skip = skips.pop().expect("one skip per level");
            let size = [g.shape(skip)[1], g.shape(skip)[2]];
            t = g.upsample_nearest2d(t, size)?;
            t = conv(g, b, &format!("occnet/up{l}"), t, same)?;
            t = lrelu(g, t)?;
            if self.cfg.skips {
                t = g.add(t, skip)?;
            }
            t = residual_block(g, b, &format!("occnet/dec{l}"), t)?;
        }
        conv(g, b, "occnet/head", t, same)
    }

    /// Confidences for channels-last warped views of the center view.
    pub fn predict(
        &self,
        params: &ParamStore,
        lc: &Image,
        rc: &Image,
        center: &Image,
        disparity: &DisparityMap,
    ) -> Result<ConfidencePair> {
        lc.check_same_shape(rc, "occnet")?;
        lc.check_same_shape(center, "occnet")?;
        disparity.check_aligned(lc.nx(), lc.ny(), "occnet")?;
        if lc.channels() != self.image_channels {
            return Err(invalid("occnet", "image channel count differs from the network"));
        }
        let mut g = Graph::new();
        let mut b = Binding::new(params, false);
        let l = g.constant(lc.to_chw())?;
        let r = g.constant(rc.to_chw())?;
        let c = g.constant(center.to_chw())?;
        let d = g.constant(disparity.tensor().clone())?;
        let out = self.confidence_graph(&mut g, &mut b, l, r, c, d)?;
        ConfidencePair::from_stack(g.value(out))
    }
}

/// `(1, X, Y)` channel-mean absolute difference.
fn residual(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let diff = g.sub(a, b)?;
    let diff = g.abs(diff)?;
    let (nx, ny) = (g.shape(a)[1], g.shape(a)[2]);
    let m = g.mean(diff, &[0])?;
    Ok(g.reshape(m, &[1, nx, ny])?)
}

/// `O_l * I_lc + O_r * I_rc` on the graph; `pair` is `(2, X, Y)`.
pub(crate) fn reconstruct_graph(g: &mut Graph, lc: Var, rc: Var, pair: Var) -> Result<Var> {
    let shape = g.shape(lc).to_vec();
    let ol = g.slice(pair, 0, 0, 1)?;
    let or = g.slice(pair, 0, 1, 2)?;
    let ol = g.expand(ol, &shape)?;
    let or = g.expand(or, &shape)?;
    let a = g.mul(ol, lc)?;
    let b = g.mul(or, rc)?;
    Ok(g.add(a, b)?)
}

/// Center view rebuilt from the two warped views.
pub fn reconstruct_center(lc: &Image, rc: &Image, pair: &ConfidencePair) -> Result<Image> {
    lc.check_same_shape(rc, "reconstruction")?;
    if pair.nx() != lc.nx() || pair.ny() != lc.ny() {
        return Err(Error::Shape {
            op: "reconstruction",
            lhs: vec![lc.nx(), lc.ny()],
            rhs: vec![pair.nx(), pair.ny()],
        });
    }
    let nc = lc.channels();
    let (l, r) = (lc.tensor().data(), rc.tensor().data());
    let (ol, or) = (pair.left.data(), pair.right.data());
    let out = (0..l.len()).map(|i| ol[i / nc] * l[i] + or[i / nc] * r[i]).collect();
    Image::new(Tensor::new(lc.tensor().shape().to_vec(), out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(nx: usize, ny: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(nx, ny, 3, |_, _, _| rng.gen())
    }

    #[test]
    fn closed_form_hand_value() {
        let net = OccNet::new(OccNetConfig { mode: OccMode::ClosedForm, ..Default::default() }, 1).unwrap();
        let c = Image::constant(1, 1, 1, 0.5);
        let l = Image::constant(1, 1, 1, 0.7);
        let pair = net.predict(&ParamStore::new(), &l, &c, &c, &DisparityMap::constant(1, 1, 0.0)).unwrap();
        let expect = 1.0 / (1.0 + 0.2f64.exp());
        assert!((pair.left().data()[0] - expect).abs() < 1e-12);
        assert!((expect - 0.450).abs() < 5e-4);
    }

    #[test]
    fn closed_form_swap_is_exact() {
        let net = OccNet::new(OccNetConfig { mode: OccMode::ClosedForm, ..Default::default() }, 3).unwrap();
        let (l, r, c) = (img(6, 5, 1), img(6, 5, 2), img(6, 5, 3));
        let d = DisparityMap::constant(6, 5, 0.3);
        let p = net.predict(&ParamStore::new(), &l, &r, &c, &d).unwrap();
        let q = net.predict(&ParamStore::new(), &r, &l, &c, &d).unwrap();
        assert_eq!(p.swapped(), q);
        let same = net.predict(&ParamStore::new(), &l, &l, &c, &d).unwrap();
        assert!(same.left().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn learned_output_sums_to_one() {
        let net = OccNet::new(OccNetConfig::default(), 3).unwrap();
        let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(4));
        assert!(params.names().all(|n| n.starts_with("occnet/")));
        let d = DisparityMap::from_fn(9, 7, |x, y| x as f64 * 0.1 - y as f64 * 0.2);
        let p = net.predict(&params, &img(9, 7, 5), &img(9, 7, 6), &img(9, 7, 7), &d).unwrap();
        assert_eq!((p.nx(), p.ny()), (9, 7));
        for (a, b) in p.left().data().iter().zip(p.right().data()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_hand_values() {
        let l = Image::constant(2, 2, 1, 0.2);
        let r = Image::constant(2, 2, 1, 0.6);
        let half = ConfidencePair::uniform(2, 2, 0.5).unwrap();
        let out = reconstruct_center(&l, &r, &half).unwrap();
        assert!(out.tensor().data().iter().all(|v| (v - 0.4).abs() < 1e-15));
        let left = ConfidencePair::uniform(2, 2, 1.0).unwrap();
        assert_eq!(reconstruct_center(&l, &r, &left).unwrap(), l);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let net = OccNet::new(OccNetConfig::default(), 3).unwrap();
        let d = DisparityMap::constant(4, 4, 0.0);
        assert!(net.predict(&ParamStore::new(), &img(4, 4, 1), &img(4, 5, 1), &img(4, 4, 1), &d).is_err());
        assert!(ConfidencePair::uniform(2, 2, 1.5).is_err());
    }
}
