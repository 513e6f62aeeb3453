//! Naive reference implementations shared by the integration tests.
#![allow(dead_code)]

use lfdepth::autodiff::Tensor;
use lfdepth::fusion::{FusionStrategy, OcclusionHandling};
use lfdepth::DisparityMap;

/// `eps[x][y]` holds the `Z` auxiliary errors of one pixel.
pub type Stack = Vec<Vec<Vec<f64>>>;

pub fn stack_from_tensor(t: &Tensor) -> Stack {
    let (nx, ny, z) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    (0..nx)
        .map(|x| (0..ny).map(|y| (0..z).map(|k| t.at(&[x, y, k])).collect()).collect())
        .collect()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    for i in 1..s.len() {
        let mut j = i;
        while j > 0 && s[j - 1] > s[j] {
            s.swap(j - 1, j);
            j -= 1;
        }
    }
    s
}

fn sum(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &x in v {
        acc += x;
    }
    acc
}

fn mean(v: &[f64]) -> f64 {
    sum(v) / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let s = sorted(v);
    let n = s.len();
    if n % 2 == 1 {
        s[(n - 1) / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    (sum(&sq) / v.len() as f64).sqrt()
}

/// Linear interpolation between the order statistics around `(n - 1) q`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let s = sorted(values);
    let pos = (s.len() - 1) as f64 * q;
    let i = pos.floor() as usize;
    if i == s.len() - 1 {
        return s[i];
    }
    s[i] + (pos - i as f64) * (s[i + 1] - s[i])
}

/// Occlusion mask and error map of one candidate.
pub fn error_map(eps: &Stack, handling: OcclusionHandling) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (nx, ny) = (eps.len(), eps[0].len());
    let mut mask = vec![vec![0.0; ny]; nx];
    let mut err = vec![vec![0.0; ny]; nx];
    match handling {
        OcclusionHandling::Quantile { q } => {
            let mut sigmas = Vec::new();
            for col in eps {
                for px in col {
                    sigmas.push(std_dev(px));
                }
            }
            let theta = quantile(&sigmas, q);
            for x in 0..nx {
                for y in 0..ny {
                    let occluded = std_dev(&eps[x][y]) > theta;
                    mask[x][y] = if occluded { 1.0 } else { 0.0 };
                    err[x][y] = if occluded { median(&eps[x][y]) } else { mean(&eps[x][y]) };
                }
            }
        }
        OcclusionHandling::KSmallest { k } => {
            for x in 0..nx {
                for y in 0..ny {
                    err[x][y] = mean(&sorted(&eps[x][y])[..k]);
                }
            }
        }
        OcclusionHandling::None => {
            for x in 0..nx {
                for y in 0..ny {
                    err[x][y] = mean(&eps[x][y]);
                }
            }
        }
    }
    (mask, err)
}

/// Fusion of `(disparity, error)` grids.
pub fn fuse(maps: &[Vec<Vec<f64>>], errors: &[Vec<Vec<f64>>], strategy: FusionStrategy) -> Vec<Vec<f64>> {
    let (nx, ny) = (maps[0].len(), maps[0][0].len());
    let n_sel = match strategy {
        FusionStrategy::MinError => 1,
        FusionStrategy::Weighted { n } => n,
    };
    let mut out = vec![vec![0.0; ny]; nx];
    for x in 0..nx {
        for y in 0..ny {
            // repeatedly take the smallest remaining error, lowest index on ties
            let mut taken = vec![false; maps.len()];
            let mut sel = Vec::new();
            for _ in 0..n_sel {
                let mut best: Option<usize> = None;
                for j in 0..maps.len() {
                    if !taken[j] && best.map_or(true, |b| errors[j][x][y] < errors[b][x][y]) {
                        best = Some(j);
                    }
                }
                let b = best.unwrap();
                taken[b] = true;
                sel.push(b);
            }
            if n_sel == 1 {
                out[x][y] = maps[sel[0]][x][y];
                continue;
            }
            let w: Vec<f64> = sel.iter().map(|&j| (-errors[j][x][y]).exp()).collect();
            let total = sum(&w);
            let terms: Vec<f64> = sel.iter().zip(&w).map(|(&j, &wj)| wj / total * maps[j][x][y]).collect();
            out[x][y] = sum(&terms);
        }
    }
    out
}

pub fn grid(d: &DisparityMap) -> Vec<Vec<f64>> {
    (0..d.nx()).map(|x| (0..d.ny()).map(|y| d.at(x, y)).collect()).collect()
}

pub fn tensor_grid(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|x| (0..t.shape()[1]).map(|y| t.at(&[x, y])).collect()).collect()
}

pub fn mse_x100(d: &DisparityMap, gt: &DisparityMap, border: usize) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for x in border..d.nx() - border {
        for y in border..d.ny() - border {
            acc += (d.at(x, y) - gt.at(x, y)).powi(2);
            n += 1;
        }
    }
    100.0 * acc / n as f64
}

pub fn bpr(d: &DisparityMap, gt: &DisparityMap, threshold: f64, border: usize) -> f64 {
    let mut bad = 0usize;
    let mut n = 0usize;
    for x in border..d.nx() - border {
        for y in border..d.ny() - border {
            if (d.at(x, y) - gt.at(x, y)).abs() > threshold {
                bad += 1;
            }
            n += 1;
        }
    }
    100.0 * bad as f64 / n as f64
}
