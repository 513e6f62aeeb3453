//! Scoring candidate disparity maps against auxiliary views and fusing them.

use lfdepth_autodiff::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::sample_shifted;
use crate::image::DisparityMap;
use crate::lightfield::LightField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FusionStrategy {
    /// Per pixel, the candidate with the smallest error.
    MinError,
    /// Softmax over the negated `n` smallest errors weights their disparities.
    Weighted { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OcclusionHandling {
    /// Median over auxiliary views where the spread exceeds its `q`-quantile.
    Quantile { q: f64 },
    /// Mean of the `k` smallest auxiliary errors everywhere.
    KSmallest { k: usize },
    /// Plain mean.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub strategy: FusionStrategy,
    pub occlusion: OcclusionHandling,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            strategy: FusionStrategy::Weighted { n: 2 },
            occlusion: OcclusionHandling::Quantile { q: 0.95 },
        }
    }
}

/// Per-candidate error data.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBundle {
    /// `(X, Y, Z)` absolute warping errors.
    pub eps: Tensor,
    /// `(X, Y)` occlusion flags in `{0, 1}`; all zero unless quantile handling is used.
    pub mask: Tensor,
    /// `(X, Y)` scalar error.
    pub error: Tensor,
}

/// Channel-mean absolute difference between the center view and each
/// auxiliary view sampled along `d` per the light-field relation.
pub fn warping_errors(lf: &LightField, d: &DisparityMap, aux: &[(usize, usize)]) -> Result<Tensor> {
    if aux.is_empty() {
        return Err(invalid("auxiliary views", "no auxiliary views"));
    }
    let (nx, ny) = lf.spatial_size();
    d.check_aligned(nx, ny, "warping errors")?;
    let (uc, vc) = lf.center();
    let center = lf.center_view();
    let nc = lf.channels();
    let z = aux.len();
    let mut eps = vec![0.0; nx * ny * z];
    for (k, &(u, v)) in aux.iter().enumerate() {
        let src = lf.view(u, v)?;
        let warped = sample_shifted(&src, d, uc as f64 - u as f64, vc as f64 - v as f64)?;
        let (a, b) = (warped.tensor().data(), center.tensor().data());
        for p in 0..nx * ny {
            let mut acc = 0.0;
            for c in 0..nc {
                acc += (a[p * nc + c] - b[p * nc + c]).abs();
            }
            eps[p * z + k] = acc / nc as f64;
        }
    }
    Ok(Tensor::new(vec![nx, ny, z], eps)?)
}

fn check_stack(eps: &Tensor) -> Result<(usize, usize, usize)> {
    if eps.rank() != 3 || eps.shape()[2] == 0 {
        return Err(invalid("error stack", format!("expected (X, Y, Z), got {:?}", eps.shape())));
    }
    Ok((eps.shape()[0], eps.shape()[1], eps.shape()[2]))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Linearly interpolated empirical quantile at position `(n - 1) q` of the sorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = (s.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    if lo + 1 >= s.len() {
        return s[s.len() - 1];
    }
    s[lo] + (pos - lo as f64) * (s[lo + 1] - s[lo])
}

/// Flags pixels whose population standard deviation over `Z` is strictly
/// above the `q`-quantile of all such deviations.
pub fn occlusion_mask(eps: &Tensor, q: f64) -> Result<Tensor> {
    let (nx, ny, z) = check_stack(eps)?;
    if z < 2 {
        return Err(invalid("occlusion mask", "needs at least two auxiliary views"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid("occlusion mask", format!("quantile {q} outside (0, 1]")));
    }
    let sigma: Vec<f64> = eps
        .data()
        .chunks_exact(z)
        .map(|e| {
            let m = mean(e);
            (e.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / z as f64).sqrt()
        })
        .collect();
    let theta = quantile(&sigma, q);
    let mask = sigma.iter().map(|&s| if s > theta { 1.0 } else { 0.0 }).collect();
    Ok(Tensor::new(vec![nx, ny], mask)?)
}

/// Median over `Z` where the mask is set, mean elsewhere.
pub fn error_map(eps: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let (nx, ny, z) = check_stack(eps)?;
    if mask.shape() != [nx, ny] {
        return Err(Error::Shape {
            op: "error map",
            lhs: eps.shape().to_vec(),
            rhs: mask.shape().to_vec(),
        });
    }
    let out = eps
        .data()
        .chunks_exact(z)
        .zip(mask.data())
        .map(|(e, &m)| if m != 0.0 { median(e) } else { mean(e) })
        .collect();
    Ok(Tensor::new(vec![nx, ny], out)?)
}

/// Mean of the `k` smallest errors per pixel.
pub fn error_map_ksmall(eps: &Tensor, k: usize) -> Result<Tensor> {
    let (nx, ny, z) = check_stack(eps)?;
    if k == 0 || k > z {
        return Err(invalid("error map", format!("k = {k} outside 1..={z}")));
    }
    let out = eps
        .data()
        .chunks_exact(z)
        .map(|e| {
            let mut s = e.to_vec();
            s.sort_by(f64::total_cmp);
            mean(&s[..k])
        })
        .collect();
    Ok(Tensor::new(vec![nx, ny], out)?)
}

/// Warping errors, mask and error map for one candidate.
pub fn error_bundle(lf: &LightField, d: &DisparityMap, aux: &[(usize, usize)], handling: OcclusionHandling) -> Result<ErrorBundle> {
    let eps = warping_errors(lf, d, aux)?;
    let (nx, ny) = lf.spatial_size();
    let (mask, error) = match handling {
        OcclusionHandling::Quantile { q } => {
            let mask = occlusion_mask(&eps, q)?;
            let error = error_map(&eps, &mask)?;
            (mask, error)
        }
        OcclusionHandling::KSmallest { k } => (Tensor::zeros(vec![nx, ny]), error_map_ksmall(&eps, k)?),
        OcclusionHandling::None => {
            let mask = Tensor::zeros(vec![nx, ny]);
            let error = error_map(&eps, &mask)?;
            (mask, error)
        }
    };
    Ok(ErrorBundle { eps, mask, error })
}

/// Error bundles of all candidates, computed in parallel.
pub fn error_bundles(
    lf: &LightField,
    candidates: &[DisparityMap],
    aux: &[(usize, usize)],
    handling: OcclusionHandling,
) -> Result<Vec<ErrorBundle>> {
    candidates
        .par_iter()
        .map(|d| error_bundle(lf, d, aux, handling))
        .collect()
}

/// Fuses candidate maps using their `(X, Y)` error maps.
///
/// Ties go to the lower candidate index. Weights are `exp(-e)` normalised
/// over the selected candidates; errors are nonnegative so no shift is needed.
pub fn fuse(candidates: &[(DisparityMap, Tensor)], strategy: FusionStrategy) -> Result<DisparityMap> {
    let first = candidates
        .first()
        .ok_or_else(|| invalid("fusion", "no candidates"))?;
    let (nx, ny) = (first.0.nx(), first.0.ny());
    for (d, e) in candidates {
        d.check_aligned(nx, ny, "fusion")?;
        if e.shape() != [nx, ny] {
            return Err(Error::Shape {
                op: "fusion",
                lhs: vec![nx, ny],
                rhs: e.shape().to_vec(),
            });
        }
    }
    let n_sel = match strategy {
        FusionStrategy::MinError => 1,
        FusionStrategy::Weighted { n } => {
            if n == 0 || n > candidates.len() {
                return Err(invalid(
                    "fusion",
                    format!("weighted fusion over {n} of {} candidates", candidates.len()),
                ));
            }
            n
        }
    };
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let mut out = Vec::with_capacity(nx * ny);
    for p in 0..nx * ny {
        let err = |j: usize| candidates[j].1.data()[p];
        order.sort_by(|&a, &b| err(a).total_cmp(&err(b)).then(a.cmp(&b)));
        let sel = &order[..n_sel];
        if n_sel == 1 {
            out.push(candidates[sel[0]].0.values()[p]);
            continue;
        }
        let w: Vec<f64> = sel.iter().map(|&j| (-err(j)).exp()).collect();
        let total: f64 = w.iter().sum();
        let value = sel
            .iter()
            .zip(&w)
            .map(|(&j, &wj)| wj / total * candidates[j].0.values()[p])
            .sum();
        out.push(value);
    }
    DisparityMap::new(Tensor::new(vec![nx, ny], out)?)
}
