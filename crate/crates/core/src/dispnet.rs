//! Disparity estimation for one row-form view combination.
//!
//! Features of the three views are matched by their per-channel variance
//! over candidate warps, giving a `(C, D, X, Y)` cost volume. Cost filters
//! refine it, a head turns it into `(D, X, Y)` scores, and a soft-argmax over
//! the samples gives the disparity. A second pass around the coarse result
//! with finer samples adds a residual.

use lfdepth_autodiff::{ConvAttrs, Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::warp_graph;
use crate::image::{DisparityMap, Image};
use crate::nn::{conv, conv_spec, lrelu, residual_block, residual_block_spec, Specs};
use crate::params::{Binding, ParamStore};
use crate::samples::{SampleRange, SampleVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Residual blocks and ASPP with trained weights.
    Learned,
    /// The image and its forward differences along x and y; no weights.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// A small 3D convolution head.
    Learned,
    /// `-sharpness * mean_c(cost)`: low variance means high probability.
    NegatedVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispNetConfig {
    pub features: FeatureMode,
    pub scoring: Scoring,
    /// Score scale for [`Scoring::NegatedVariance`].
    pub oracle_sharpness: f64,
    pub channels: usize,
    pub residual_blocks: usize,
    pub aspp_dilations: Vec<usize>,
    pub filter_count: usize,
    /// Channels inside the downsampled part of each cost filter.
    pub filter_channels: usize,
    pub head_channels: usize,
    pub shared_filters: bool,
    pub coarse_to_fine: bool,
}

impl Default for DispNetConfig {
    fn default() -> Self {
        Self {
            features: FeatureMode::Learned,
            scoring: Scoring::Learned,
            oracle_sharpness: 3000.0,
            channels: 16,
            residual_blocks: 3,
            aspp_dilations: vec![3, 6, 8],
            filter_count: 2,
            filter_channels: 8,
            head_channels: 8,
            shared_filters: true,
            coarse_to_fine: true,
        }
    }
}

impl DispNetConfig {
    /// The untrained configuration: fallback features, no filters, negated
    /// variance scores.
    pub fn oracle() -> Self {
        Self {
            features: FeatureMode::Fallback,
            scoring: Scoring::NegatedVariance,
            filter_count: 0,
            ..Self::default()
        }
    }
}

/// Coarse and residual hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    pub coarse: SampleVector,
    pub residual: SampleVector,
}

impl Sampling {
    pub fn new(coarse: SampleVector, residual: SampleVector) -> Result<Self> {
        if residual.interval() >= coarse.interval() {
            return Err(invalid("sampling", "residual interval must be finer than the coarse interval"));
        }
        let extent = coarse.max() - coarse.min();
        if residual.min().abs().max(residual.max().abs()) >= extent {
            return Err(invalid("sampling", "residual range must lie inside the coarse extent"));
        }
        Ok(Self { coarse, residual })
    }

    pub fn from_ranges(coarse: &SampleRange, residual: &SampleRange) -> Result<Self> {
        Self::new(coarse.build()?, residual.build()?)
    }
}

/// Match scores `(C, D, X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub scores: Tensor,
}

impl CostVolume {
    pub fn new(scores: Tensor) -> Result<Self> {
        if scores.rank() != 4 {
            return Err(invalid("cost volume", format!("expected (C, D, X, Y), got {:?}", scores.shape())));
        }
        if !scores.is_finite() {
            return Err(Error::NonFinite("cost volume"));
        }
        Ok(Self { scores })
    }

    pub fn depth(&self) -> usize {
        self.scores.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Coarse,
    Residual,
}

impl Branch {
    fn tag(self) -> &'static str {
        match self {
            Branch::Coarse => "coarse",
            Branch::Residual => "residual",
        }
    }
}

/// Graph handles of one forward pass, each `(X, Y)`.
#[derive(Debug, Clone, Copy)]
pub struct DispVars {
    pub coarse: Var,
    pub residual: Option<Var>,
    pub refined: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub coarse: DisparityMap,
    pub residual: DisparityMap,
    pub refined: DisparityMap,
}

#[derive(Debug, Clone)]
pub struct DispNet {
    cfg: DispNetConfig,
    image_channels: usize,
}

impl DispNet {
    pub fn new(cfg: DispNetConfig, image_channels: usize) -> Result<Self> {
        if image_channels == 0 {
            return Err(invalid("dispnet", "images need at least one channel"));
        }
        if cfg.features == FeatureMode::Learned && cfg.channels == 0 {
            return Err(invalid("dispnet", "feature channels must be positive"));
        }
        if cfg.filter_count > 0 && cfg.filter_channels == 0 {
            return Err(invalid("dispnet", "filter channels must be positive"));
        }
        if cfg.scoring == Scoring::Learned && cfg.head_channels == 0 {
            return Err(invalid("dispnet", "head channels must be positive"));
        }
        if !(cfg.oracle_sharpness > 0.0 && cfg.oracle_sharpness.is_finite()) {
            return Err(invalid("dispnet", "oracle sharpness must be positive"));
        }
        if cfg.aspp_dilations.contains(&0) {
            return Err(invalid("dispnet", "dilation rates must be positive"));
        }
        Ok(Self { cfg, image_channels })
    }

    pub fn config(&self) -> &DispNetConfig {
        &self.cfg
    }

    pub fn image_channels(&self) -> usize {
        self.image_channels
    }

    pub fn feature_channels(&self) -> usize {
        match self.cfg.features {
            FeatureMode::Learned => self.cfg.channels,
            FeatureMode::Fallback => 3 * self.image_channels,
        }
    }

    fn filter_prefix(&self, branch: Branch, j: usize) -> String {
        if self.cfg.shared_filters {
            format!("dispnet/filter/{j}")
        } else {
            format!("dispnet/filter-{}/{j}", branch.tag())
        }
    }

    /// Names of the cost-filter tensors used by `branch`.
    pub fn filter_param_names(&self, branch: Branch) -> Vec<String> {
        let mut specs = Specs::new();
        self.filter_specs(&mut specs, branch);
        specs.into_iter().map(|(n, _)| n).collect()
    }

    fn filter_specs(&self, specs: &mut Specs, branch: Branch) {
        let (c, cf) = (self.feature_channels(), self.cfg.filter_channels);
        for j in 0..self.cfg.filter_count {
            let p = self.filter_prefix(branch, j);
            conv_spec(specs, &format!("{p}/down"), cf, c, &[3, 3, 3]);
            residual_block_spec(specs, &format!("{p}/res"), cf, &[3, 3, 3]);
            conv_spec(specs, &format!("{p}/up"), c, cf, &[1, 1, 1]);
        }
    }

    /// Every parameter tensor with its shape.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Specs::new();
        let c = self.feature_channels();
        if self.cfg.features == FeatureMode::Learned {
            conv_spec(&mut specs, "dispnet/feature/stem", c, self.image_channels, &[3, 3]);
            for i in 0..self.cfg.residual_blocks {
                residual_block_spec(&mut specs, &format!("dispnet/feature/res{i}"), c, &[3, 3]);
            }
            for &r in &self.cfg.aspp_dilations {
                conv_spec(&mut specs, &format!("dispnet/feature/aspp/rate{r}"), c, c, &[3, 3]);
            }
            conv_spec(&mut specs, "dispnet/feature/aspp/pool", c, c, &[1, 1]);
            let branches = self.cfg.aspp_dilations.len() + 2;
            conv_spec(&mut specs, "dispnet/feature/aspp/fuse", c, branches * c, &[1, 1]);
        }
        self.filter_specs(&mut specs, Branch::Coarse);
        if !self.cfg.shared_filters {
            self.filter_specs(&mut specs, Branch::Residual);
        }
        if self.cfg.scoring == Scoring::Learned {
            for branch in [Branch::Coarse, Branch::Residual] {
                let p = format!("dispnet/head-{}", branch.tag());
                conv_spec(&mut specs, &format!("{p}/hidden"), self.cfg.head_channels, c, &[1, 1, 1]);
                conv_spec(&mut specs, &format!("{p}/out"), 1, self.cfg.head_channels, &[3, 3, 3]);
            }
        }
        specs
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::new();
        store.init_from_specs(&self.param_specs(), rng);
        store
    }

    /// `(C_img, X, Y)` image to `(C, X, Y)` features.
    pub(crate) fn features_graph(&self, g: &mut Graph, b: &mut Binding, img: Var) -> Result<Var> {
        match self.cfg.features {
            FeatureMode::Fallback => {
                let dx = g.spatial_gradient(img, 1)?;
                let dy = g.spatial_gradient(img, 2)?;
                Ok(g.concat(&[img, dx, dy], 0)?)
            }
            FeatureMode::Learned => {
                let stem = conv(g, b, "dispnet/feature/stem", img, ConvAttrs::same(3, 1))?;
                let mut h = lrelu(g, stem)?;
                for i in 0..self.cfg.residual_blocks {
                    h = residual_block(g, b, &format!("dispnet/feature/res{i}"), h)?;
                }
                let shape = g.shape(h).to_vec();
                let mut branches = vec![h];
                for &r in &self.cfg.aspp_dilations {
                    let y = conv(g, b, &format!("dispnet/feature/aspp/rate{r}"), h, ConvAttrs::same(3, r))?;
                    branches.push(lrelu(g, y)?);
                }
                let pooled = g.mean(h, &[1, 2])?;
                let pooled = g.reshape(pooled, &[shape[0], 1, 1])?;
                let pooled = conv(g, b, "dispnet/feature/aspp/pool", pooled, ConvAttrs::default())?;
                let pooled = lrelu(g, pooled)?;
                branches.push(g.expand(pooled, &shape)?);
                let cat = g.concat(&branches, 0)?;
                conv(g, b, "dispnet/feature/aspp/fuse", cat, ConvAttrs::default())
            }
        }
    }

    pub(crate) fn filter_graph(&self, g: &mut Graph, b: &mut Binding, vol: Var, branch: Branch) -> Result<Var> {
        if self.cfg.filter_count == 0 {
            return Ok(vol);
        }
        let shape = g.shape(vol).to_vec();
        if shape[1..].iter().any(|&n| n < 4) {
            return Err(invalid(
                "cost filter",
                format!("volume {:?} too small to downsample (D, X and Y must be at least 4)", shape),
            ));
        }
        let size = [shape[1], shape[2], shape[3]];
        let mut v = vol;
        for j in 0..self.cfg.filter_count {
            let p = self.filter_prefix(branch, j);
            let h = conv(g, b, &format!("{p}/down"), v, ConvAttrs::new(2, 1, 1))?;
            let h = lrelu(g, h)?;
            let h = residual_block(g, b, &format!("{p}/res"), h)?;
            let up = g.upsample_trilinear3d(h, size)?;
            let proj = conv(g, b, &format!("{p}/up"), up, ConvAttrs::default())?;
            v = g.add(v, proj)?;
        }
        Ok(v)
    }

    /// `(C, D, X, Y)` volume to `(D, X, Y)` scores.
    pub(crate) fn scores_graph(&self, g: &mut Graph, b: &mut Binding, vol: Var, branch: Branch) -> Result<Var> {
        let shape = g.shape(vol).to_vec();
        let (d, nx, ny) = (shape[1], shape[2], shape[3]);
        match self.cfg.scoring {
            Scoring::NegatedVariance => {
                let m = g.mean(vol, &[0])?;
                Ok(g.scale(m, -self.cfg.oracle_sharpness)?)
            }
            Scoring::Learned => {
                let p = format!("dispnet/head-{}", branch.tag());
                let h = conv(g, b, &format!("{p}/hidden"), vol, ConvAttrs::default())?;
                let h = lrelu(g, h)?;
                let s = conv(g, b, &format!("{p}/out"), h, ConvAttrs::same(3, 1))?;
                Ok(g.reshape(s, &[d, nx, ny])?)
            }
        }
    }

    /// Full forward pass on `(C_img, X, Y)` views `[left, center, right]`.
    pub fn forward_graph(&self, g: &mut Graph, b: &mut Binding, views: [Var; 3], sampling: &Sampling) -> Result<DispVars> {
        let [l, c, r] = views;
        let fl = self.features_graph(g, b, l)?;
        let fc = self.features_graph(g, b, c)?;
        let fr = self.features_graph(g, b, r)?;

        let vol = coarse_cost_graph(g, fc, fl, fr, &sampling.coarse)?;
        let vol = self.filter_graph(g, b, vol, Branch::Coarse)?;
        let scores = self.scores_graph(g, b, vol, Branch::Coarse)?;
        let coarse = regress_graph(g, scores, &sampling.coarse)?;
        if !self.cfg.coarse_to_fine {
            return Ok(DispVars {
                coarse,
                residual: None,
                refined: coarse,
            });
        }
        let vol = residual_cost_graph(g, fc, fl, fr, Some(coarse), &sampling.residual)?;
        let vol = self.filter_graph(g, b, vol, Branch::Residual)?;
        let scores = self.scores_graph(g, b, vol, Branch::Residual)?;
        let residual = regress_graph(g, scores, &sampling.residual)?;
        let refined = g.add(coarse, residual)?;
        Ok(DispVars {
            coarse,
            residual: Some(residual),
            refined,
        })
    }

    fn check_views(&self, views: &[Image; 3]) -> Result<()> {
        views[0].check_same_shape(&views[1], "dispnet inputs")?;
        views[0].check_same_shape(&views[2], "dispnet inputs")?;
        if views[0].channels() != self.image_channels {
            return Err(invalid(
                "dispnet",
                format!("expected {} image channels, got {}", self.image_channels, views[0].channels()),
            ));
        }
        if views.iter().any(|v| !v.tensor().is_finite()) {
            return Err(Error::NonFinite("dispnet input"));
        }
        Ok(())
    }

    /// Inference on `[left, center, right]` row-form views.
    pub fn estimate(&self, params: &ParamStore, views: &[Image; 3], sampling: &Sampling) -> Result<Estimate> {
        self.check_views(views)?;
        let mut g = Graph::new();
        let mut b = Binding::new(params, false);
        let vars = [
            g.constant(views[0].to_chw())?,
            g.constant(views[1].to_chw())?,
            g.constant(views[2].to_chw())?,
        ];
        let out = self.forward_graph(&mut g, &mut b, vars, sampling)?;
        let coarse = DisparityMap::new(g.value(out.coarse).clone())?;
        let residual = match out.residual {
            Some(r) => DisparityMap::new(g.value(r).clone())?,
            None => DisparityMap::constant(coarse.nx(), coarse.ny(), 0.0),
        };
        let refined = DisparityMap::new(g.value(out.refined).clone())?;
        Ok(Estimate {
            coarse,
            residual,
            refined,
        })
    }

    /// Features `(C, X, Y)` of a channels-last image.
    pub fn extract_features(&self, params: &ParamStore, image: &Image) -> Result<Tensor> {
        if image.channels() != self.image_channels {
            return Err(invalid("dispnet", "image channel count differs from the network"));
        }
        if !image.tensor().is_finite() {
            return Err(Error::NonFinite("feature input"));
        }
        let mut g = Graph::new();
        let mut b = Binding::new(params, false);
        let x = g.constant(image.to_chw())?;
        let f = self.features_graph(&mut g, &mut b, x)?;
        Ok(g.value(f).clone())
    }

    pub fn filter_cost(&self, params: &ParamStore, volume: &CostVolume, branch: Branch) -> Result<CostVolume> {
        let mut g = Graph::new();
        let mut b = Binding::new(params, false);
        let v = g.constant(volume.scores.clone())?;
        let out = self.filter_graph(&mut g, &mut b, v, branch)?;
        CostVolume::new(g.value(out).clone())
    }
}

fn stack_variance(g: &mut Graph, fc: Var, wl: Var, wr: Var) -> Result<Var> {
    let shape = g.shape(fc).to_vec();
    let (c, nx, ny) = (shape[0], shape[1], shape[2]);
    let one = [1, c, nx, ny];
    let parts = [g.reshape(fc, &one)?, g.reshape(wl, &one)?, g.reshape(wr, &one)?];
    let stack = g.concat(&parts, 0)?;
    let var = g.variance(stack, 0)?;
    Ok(g.reshape(var, &[c, 1, nx, ny])?)
}

fn check_features(g: &Graph, fc: Var, fl: Var, fr: Var) -> Result<()> {
    for other in [fl, fr] {
        if g.shape(other) != g.shape(fc) {
            return Err(Error::Shape {
                op: "cost volume",
                lhs: g.shape(fc).to_vec(),
                rhs: g.shape(other).to_vec(),
            });
        }
    }
    if g.shape(fc).len() != 3 {
        return Err(invalid("cost volume", "features must be (C, X, Y)"));
    }
    Ok(())
}

/// Variance volume for constant shifts: left sampled at `x + s`, right at `x - s`.
pub(crate) fn coarse_cost_graph(g: &mut Graph, fc: Var, fl: Var, fr: Var, samples: &SampleVector) -> Result<Var> {
    residual_cost_graph(g, fc, fl, fr, None, samples)
}

/// Variance volume for per-pixel shifts `base(x, y) + s`.
pub(crate) fn residual_cost_graph(
    g: &mut Graph,
    fc: Var,
    fl: Var,
    fr: Var,
    base: Option<Var>,
    samples: &SampleVector,
) -> Result<Var> {
    check_features(g, fc, fl, fr)?;
    let (nx, ny) = (g.shape(fc)[1], g.shape(fc)[2]);
    if let Some(bv) = base {
        if g.shape(bv) != [nx, ny] {
            return Err(Error::Shape {
                op: "residual cost volume",
                lhs: g.shape(bv).to_vec(),
                rhs: vec![nx, ny],
            });
        }
    }
    let mut slices = Vec::with_capacity(samples.len());
    for &s in samples.values() {
        let shift = g.constant(Tensor::full(vec![nx, ny], s))?;
        let disp = match base {
            Some(bv) => g.add(bv, shift)?,
            None => shift,
        };
        let wl = warp_graph(g, fl, disp, 1.0)?;
        let wr = warp_graph(g, fr, disp, -1.0)?;
        slices.push(stack_variance(g, fc, wl, wr)?);
    }
    Ok(g.concat(&slices, 1)?)
}

pub(crate) fn regress_graph(g: &mut Graph, scores: Var, samples: &SampleVector) -> Result<Var> {
    let d = g.shape(scores)[0];
    if d != samples.len() {
        return Err(invalid(
            "regression",
            format!("score depth {d} differs from {} samples", samples.len()),
        ));
    }
    let p = g.softmax(scores, 0)?;
    Ok(g.inner_product(p, 0, samples.values())?)
}

fn features_on_graph(g: &mut Graph, f: [&Tensor; 3]) -> Result<[Var; 3]> {
    Ok([g.constant(f[0].clone())?, g.constant(f[1].clone())?, g.constant(f[2].clone())?])
}

/// Coarse volume from center, left and right features `(C, X, Y)`.
pub fn build_coarse_cost(fc: &Tensor, fl: &Tensor, fr: &Tensor, samples: &SampleVector) -> Result<CostVolume> {
    let mut g = Graph::new();
    let [c, l, r] = features_on_graph(&mut g, [fc, fl, fr])?;
    let v = coarse_cost_graph(&mut g, c, l, r, samples)?;
    CostVolume::new(g.value(v).clone())
}

/// Residual volume around the coarse map `d_coa`.
pub fn build_residual_cost(
    fc: &Tensor,
    fl: &Tensor,
    fr: &Tensor,
    d_coa: &DisparityMap,
    samples: &SampleVector,
) -> Result<CostVolume> {
    let mut g = Graph::new();
    let [c, l, r] = features_on_graph(&mut g, [fc, fl, fr])?;
    let base = g.constant(d_coa.tensor().clone())?;
    let v = residual_cost_graph(&mut g, c, l, r, Some(base), samples)?;
    CostVolume::new(g.value(v).clone())
}

/// Soft-argmax of `(D, X, Y)` scores over `samples`.
pub fn regress(scores: &Tensor, samples: &SampleVector) -> Result<DisparityMap> {
    if scores.rank() != 3 {
        return Err(invalid("regression", format!("expected (D, X, Y) scores, got {:?}", scores.shape())));
    }
    let mut g = Graph::new();
    let s = g.constant(scores.clone())?;
    let d = regress_graph(&mut g, s, samples)?;
    DisparityMap::new(g.value(d).clone())
}
