//! Unsupervised training losses on `(C, X, Y)` images and `(X, Y)` maps.
//!
//! The `*_graph` builders are what training differentiates; the plain
//! functions evaluate the same graphs on constants.

use lfdepth_autodiff::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{DisparityMap, Image};
use crate::occlusion::ConfidencePair;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// SSIM weight.
    pub alpha1: f64,
    /// Disparity smoothness weight.
    pub alpha2: f64,
    /// Occlusion smoothness weight.
    pub alpha3: f64,
    /// Edge sharpness of the smoothness guide.
    pub eta: f64,
    /// Multiplier of the terms recomputed from the coarse disparity.
    pub coarse_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 0.1,
            alpha3: 0.05,
            eta: 100.0,
            coarse_weight: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.alpha3, self.eta, self.coarse_weight];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("loss weights", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

fn check_same(g: &Graph, op: &'static str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::Shape {
            op,
            lhs: g.shape(a).to_vec(),
            rhs: g.shape(b).to_vec(),
        });
    }
    Ok(())
}

/// Mean absolute difference over all elements.
pub fn rec_graph(g: &mut Graph, rec: Var, center: Var) -> Result<Var> {
    check_same(g, "reconstruction loss", rec, center)?;
    let d = g.sub(rec, center)?;
    let d = g.abs(d)?;
    Ok(g.mean(d, &[])?)
}

/// `(X, Y)` channel-mean absolute residual.
fn residual_map(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let d = g.abs(d)?;
    Ok(g.mean(d, &[0])?)
}

/// Confidence-weighted photometric loss; `pair` is `(2, X, Y)`.
pub fn wpm_graph(g: &mut Graph, lc: Var, rc: Var, center: Var, pair: Var) -> Result<Var> {
    check_same(g, "photometric loss", lc, center)?;
    check_same(g, "photometric loss", rc, center)?;
    let (nx, ny) = (g.shape(center)[1], g.shape(center)[2]);
    if g.shape(pair) != [2, nx, ny] {
        return Err(Error::Shape {
            op: "photometric loss",
            lhs: vec![2, nx, ny],
            rhs: g.shape(pair).to_vec(),
        });
    }
    let el = residual_map(g, lc, center)?;
    let er = residual_map(g, rc, center)?;
    let ol = g.slice(pair, 0, 0, 1)?;
    let ol = g.reshape(ol, &[nx, ny])?;
    let or = g.slice(pair, 0, 1, 2)?;
    let or = g.reshape(or, &[nx, ny])?;
    let wl = g.mul(ol, el)?;
    let wr = g.mul(or, er)?;
    let s = g.add(wl, wr)?;
    Ok(g.mean(s, &[])?)
}

/// Mean SSIM over valid 3x3 windows and channels.
pub fn ssim_graph(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    check_same(g, "ssim", a, b)?;
    let shape = g.shape(a);
    if shape.len() != 3 || shape[1] < 3 || shape[2] < 3 {
        return Err(invalid("ssim", format!("image {shape:?} is smaller than the 3x3 window")));
    }
    let pool = |g: &mut Graph, v: Var| g.avg_pool2d(v, 3, 1);
    let mu_a = pool(g, a)?;
    let mu_b = pool(g, b)?;
    let aa = g.mul(a, a)?;
    let bb = g.mul(b, b)?;
    let ab = g.mul(a, b)?;
    let e_aa = pool(g, aa)?;
    let e_bb = pool(g, bb)?;
    let e_ab = pool(g, ab)?;
    let mu_aa = g.mul(mu_a, mu_a)?;
    let mu_bb = g.mul(mu_b, mu_b)?;
    let mu_ab = g.mul(mu_a, mu_b)?;
    let var_a = g.sub(e_aa, mu_aa)?;
    let var_b = g.sub(e_bb, mu_bb)?;
    let cov = g.sub(e_ab, mu_ab)?;

    let n1 = g.scale(mu_ab, 2.0)?;
    let n1 = g.add_scalar(n1, SSIM_C1)?;
    let n2 = g.scale(cov, 2.0)?;
    let n2 = g.add_scalar(n2, SSIM_C2)?;
    let d1 = g.add(mu_aa, mu_bb)?;
    let d1 = g.add_scalar(d1, SSIM_C1)?;
    let d2 = g.add(var_a, var_b)?;
    let d2 = g.add_scalar(d2, SSIM_C2)?;
    let num = g.mul(n1, n2)?;
    let den = g.mul(d1, d2)?;
    let s = g.div(num, den)?;
    Ok(g.mean(s, &[])?)
}

/// `1 - (SSIM(lc, c) + SSIM(rc, c)) / 2`.
pub fn ssim_loss_graph(g: &mut Graph, lc: Var, rc: Var, center: Var) -> Result<Var> {
    let sl = ssim_graph(g, lc, center)?;
    let sr = ssim_graph(g, rc, center)?;
    let s = g.add(sl, sr)?;
    let s = g.scale(s, -0.5)?;
    Ok(g.add_scalar(s, 1.0)?)
}

/// Edge-aware smoothness of an `(X, Y)` map guided by a `(C, X, Y)` image.
pub fn smooth_graph(g: &mut Graph, map: Var, guide: Var, eta: f64) -> Result<Var> {
    let (nx, ny) = (g.shape(guide)[1], g.shape(guide)[2]);
    if g.shape(map) != [nx, ny] {
        return Err(Error::Shape {
            op: "smoothness loss",
            lhs: vec![nx, ny],
            rhs: g.shape(map).to_vec(),
        });
    }
    let mut total = None;
    for axis in 0..2 {
        let dm = g.spatial_gradient(map, axis)?;
        let dm = g.abs(dm)?;
        let di = g.spatial_gradient(guide, axis + 1)?;
        let di = g.abs(di)?;
        let di = g.mean(di, &[0])?;
        let w = g.scale(di, -eta)?;
        let w = g.exp(w)?;
        let t = g.mul(dm, w)?;
        total = Some(match total {
            None => t,
            Some(acc) => g.add(acc, t)?,
        });
    }
    Ok(g.mean(total.expect("two axes"), &[])?)
}

/// Graph handles of every term of one training step.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub full: Var,
    pub wpm: Var,
    pub rec: Var,
    pub ssim: Var,
    pub smd: Var,
    pub smo: Var,
}

/// Evaluated loss terms. `full = wpm + rec + a1 ssim + a2 smd + a3 smo`,
/// where each term already includes its coarse-branch share.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossTerms {
    pub full: f64,
    pub wpm: f64,
    pub rec: f64,
    pub ssim: f64,
    pub smd: f64,
    pub smo: f64,
}

impl LossVars {
    pub fn values(&self, g: &Graph) -> LossTerms {
        let s = |v: Var| g.value(v).data()[0];
        LossTerms {
            full: s(self.full),
            wpm: s(self.wpm),
            rec: s(self.rec),
            ssim: s(self.ssim),
            smd: s(self.smd),
            smo: s(self.smo),
        }
    }
}

/// Warps and maps produced by one branch.
#[derive(Debug, Clone, Copy)]
pub struct BranchInputs {
    pub lc: Var,
    pub rc: Var,
    pub disparity: Var,
}

/// The full objective. `refined` feeds every term; `coarse`, when the
/// network has a separate coarse estimate, adds `coarse_weight` times its
/// photometric, SSIM and disparity-smoothness terms under the same
/// confidences. `pair` is `(2, X, Y)`.
pub fn full_graph(
    g: &mut Graph,
    center: Var,
    refined: BranchInputs,
    coarse: Option<BranchInputs>,
    pair: Var,
    rec_image: Var,
    w: &LossWeights,
) -> Result<LossVars> {
    w.validate()?;
    let mut wpm = wpm_graph(g, refined.lc, refined.rc, center, pair)?;
    let rec = rec_graph(g, rec_image, center)?;
    let mut ssim = ssim_loss_graph(g, refined.lc, refined.rc, center)?;
    let mut smd = smooth_graph(g, refined.disparity, center, w.eta)?;
    let (nx, ny) = (g.shape(center)[1], g.shape(center)[2]);
    let ol = g.slice(pair, 0, 0, 1)?;
    let ol = g.reshape(ol, &[nx, ny])?;
    let smo = smooth_graph(g, ol, center, w.eta)?;
    if let Some(c) = coarse {
        let cw = wpm_graph(g, c.lc, c.rc, center, pair)?;
        let cs = ssim_loss_graph(g, c.lc, c.rc, center)?;
        let cd = smooth_graph(g, c.disparity, center, w.eta)?;
        let cw = g.scale(cw, w.coarse_weight)?;
        let cs = g.scale(cs, w.coarse_weight)?;
        let cd = g.scale(cd, w.coarse_weight)?;
        wpm = g.add(wpm, cw)?;
        ssim = g.add(ssim, cs)?;
        smd = g.add(smd, cd)?;
    }
    let mut full = g.add(wpm, rec)?;
    for (term, a) in [(ssim, w.alpha1), (smd, w.alpha2), (smo, w.alpha3)] {
        let t = g.scale(term, a)?;
        full = g.add(full, t)?;
    }
    Ok(LossVars {
        full,
        wpm,
        rec,
        ssim,
        smd,
        smo,
    })
}

fn scalar(g: &Graph, v: Var) -> f64 {
    g.value(v).data()[0]
}

fn pair_tensor(pair: &ConfidencePair) -> Result<Tensor> {
    let mut data = pair.left().data().to_vec();
    data.extend_from_slice(pair.right().data());
    Ok(Tensor::new(vec![2, pair.nx(), pair.ny()], data)?)
}

pub fn loss_rec(rec: &Image, center: &Image) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(rec.to_chw())?, g.constant(center.to_chw())?);
    let v = rec_graph(&mut g, a, b)?;
    Ok(scalar(&g, v))
}

pub fn loss_wpm(lc: &Image, rc: &Image, center: &Image, pair: &ConfidencePair) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.constant(lc.to_chw())?;
    let r = g.constant(rc.to_chw())?;
    let c = g.constant(center.to_chw())?;
    let p = g.constant(pair_tensor(pair)?)?;
    let v = wpm_graph(&mut g, l, r, c, p)?;
    Ok(scalar(&g, v))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let mut g = Graph::new();
    let (x, y) = (g.constant(a.to_chw())?, g.constant(b.to_chw())?);
    let v = ssim_graph(&mut g, x, y)?;
    Ok(scalar(&g, v))
}

pub fn loss_ssim(lc: &Image, rc: &Image, center: &Image) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.constant(lc.to_chw())?;
    let r = g.constant(rc.to_chw())?;
    let c = g.constant(center.to_chw())?;
    let v = ssim_loss_graph(&mut g, l, r, c)?;
    Ok(scalar(&g, v))
}

pub fn loss_smooth(map: &DisparityMap, guide: &Image, eta: f64) -> Result<f64> {
    let mut g = Graph::new();
    let m = g.constant(map.tensor().clone())?;
    let i = g.constant(guide.to_chw())?;
    let v = smooth_graph(&mut g, m, i, eta)?;
    Ok(scalar(&g, v))
}

/// Loss builders covered by [`gradcheck_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Rec,
    Wpm,
    Ssim,
    Smooth,
    Full,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [LossKind::Rec, LossKind::Wpm, LossKind::Ssim, LossKind::Smooth, LossKind::Full];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Rec => "loss-rec",
            LossKind::Wpm => "loss-wpm",
            LossKind::Ssim => "loss-ssim",
            LossKind::Smooth => "loss-smooth",
            LossKind::Full => "loss-full",
        }
    }
}

/// Max relative error between backprop and central differences over
/// `trials` random 8x8, three-channel instances of `kind`. Confidences come
/// from a softmax over free logits; `Full` includes the disparity warps and
/// the coarse branch.
pub fn gradcheck_loss(kind: LossKind, trials: usize, seed: u64) -> Result<f64> {
    use lfdepth_autodiff::gradcheck::{finite_difference_check, FdOptions};
    use rand::SeedableRng;

    const N: usize = 8;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (kind as u64 + 1).wrapping_mul(0x9e37_79b9));
    let img = |rng: &mut rand_chacha::ChaCha8Rng| Tensor::rand_uniform(vec![3, N, N], 0.0, 1.0, rng);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let err = match kind {
            LossKind::Rec => finite_difference_check(
                &[img(&mut rng), img(&mut rng)],
                |g, v| rec_graph(g, v[0], v[1]).map_err(into_tensor_err),
                FdOptions::default(),
            )?,
            LossKind::Wpm => finite_difference_check(
                &[img(&mut rng), img(&mut rng), img(&mut rng), Tensor::rand_uniform(vec![2, N, N], -2.0, 2.0, &mut rng)],
                |g, v| {
                    let pair = g.softmax(v[3], 0)?;
                    wpm_graph(g, v[0], v[1], v[2], pair).map_err(into_tensor_err)
                },
                FdOptions::default(),
            )?,
            LossKind::Ssim => finite_difference_check(
                &[img(&mut rng), img(&mut rng), img(&mut rng)],
                |g, v| ssim_loss_graph(g, v[0], v[1], v[2]).map_err(into_tensor_err),
                FdOptions::default(),
            )?,
            LossKind::Smooth => finite_difference_check(
                &[Tensor::rand_uniform(vec![N, N], -2.0, 2.0, &mut rng), img(&mut rng)],
                |g, v| smooth_graph(g, v[0], v[1], 10.0).map_err(into_tensor_err),
                FdOptions::default(),
            )?,
            LossKind::Full => {
                let w = LossWeights { eta: 10.0, ..Default::default() };
                let inputs = [
                    img(&mut rng),
                    img(&mut rng),
                    img(&mut rng),
                    Tensor::rand_uniform(vec![N, N], -1.5, 1.5, &mut rng),
                    Tensor::rand_uniform(vec![N, N], -1.5, 1.5, &mut rng),
                    Tensor::rand_uniform(vec![2, N, N], -2.0, 2.0, &mut rng),
                ];
                finite_difference_check(
                    &inputs,
                    |g, v| {
                        let branch = |g: &mut Graph, d: Var| -> Result<BranchInputs> {
                            Ok(BranchInputs {
                                lc: crate::geometry::warp_graph(g, v[0], d, 1.0)?,
                                rc: crate::geometry::warp_graph(g, v[2], d, -1.0)?,
                                disparity: d,
                            })
                        };
                        let mut inner = || -> Result<Var> {
                            let fine = branch(g, v[3])?;
                            let coarse = branch(g, v[4])?;
                            let pair = g.softmax(v[5], 0)?;
                            let rec = crate::occlusion::reconstruct_graph(g, fine.lc, fine.rc, pair)?;
                            Ok(full_graph(g, v[1], fine, Some(coarse), pair, rec, &w)?.full)
                        };
                        inner().map_err(into_tensor_err)
                    },
                    FdOptions::default(),
                )?
            }
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn into_tensor_err(e: Error) -> lfdepth_autodiff::TensorError {
    match e {
        Error::Tensor(t) => t,
        other => lfdepth_autodiff::TensorError::InvalidAttr {
            op: "loss",
            msg: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(nx: usize, ny: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(nx, ny, 3, |_, _, _| rng.gen())
    }

    #[test]
    fn rec_offset() {
        let a = img(5, 4, 1);
        let b = Image::new(a.tensor().map(|v| v + 0.1)).unwrap();
        assert!((loss_rec(&b, &a).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(loss_rec(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn wpm_one_pixel() {
        let c = Image::constant(1, 1, 1, 0.0);
        let l = Image::constant(1, 1, 1, 0.3);
        let r = Image::constant(1, 1, 1, 0.9);
        let pair = ConfidencePair::uniform(1, 1, 1.0).unwrap();
        assert!((loss_wpm(&l, &r, &c, &pair).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn wpm_half_is_mean_of_maes() {
        let (l, r, c) = (img(6, 5, 1), img(6, 5, 2), img(6, 5, 3));
        let half = ConfidencePair::uniform(6, 5, 0.5).unwrap();
        let expect = 0.5 * (loss_rec(&l, &c).unwrap() + loss_rec(&r, &c).unwrap());
        assert!((loss_wpm(&l, &r, &c, &half).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn ssim_self_is_one() {
        let a = img(7, 6, 4);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        assert!(loss_ssim(&a, &a, &a).unwrap().abs() < 1e-6);
        assert!(ssim(&Image::constant(2, 5, 1, 0.1), &Image::constant(2, 5, 1, 0.1)).is_err());
    }

    #[test]
    fn smooth_ramp_with_flat_guide() {
        let guide = Image::constant(6, 6, 3, 0.4);
        let ramp = DisparityMap::from_fn(6, 6, |x, _| 0.5 * x as f64);
        // the last column has zero forward difference
        let expect = 0.5 * 5.0 / 6.0;
        assert!((loss_smooth(&ramp, &guide, 100.0).unwrap() - expect).abs() < 1e-12);
        assert_eq!(loss_smooth(&DisparityMap::constant(6, 6, 2.0), &img(6, 6, 1), 100.0).unwrap(), 0.0);
    }

    #[test]
    fn every_loss_passes_gradcheck() {
        for kind in LossKind::ALL {
            let err = gradcheck_loss(kind, 2, 9).unwrap();
            assert!(err < 1e-4, "{} error {err}", kind.name());
        }
    }

    #[test]
    fn negative_weights_rejected() {
        let w = LossWeights { alpha2: -0.1, ..Default::default() };
        assert!(w.validate().is_err());
    }
}
