//! End-to-end inference: every view combination through DispNet, scaled
//! back to the center view, then fused.

use rayon::prelude::*;

use crate::dispnet::{DispNet, Estimate, Sampling};
use crate::error::{invalid, Result};
use crate::fusion::{error_bundles, fuse, ErrorBundle, FusionConfig};
use crate::geometry::{finalize_disparity, rotate_inputs};
use crate::image::DisparityMap;
use crate::lightfield::{auxiliary_views, enumerate_combinations, AuxiliaryViews, LightField, ViewCombination};
use crate::params::ParamStore;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sampling: Sampling,
    /// Baselines of the row and column combinations.
    pub offsets: Vec<usize>,
    pub aux: AuxiliaryViews,
    /// Drop auxiliary views that already feed DispNet.
    pub exclude_input_views: bool,
    pub fusion: FusionConfig,
}

/// One combination's estimate in the center-view frame, per unit baseline.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub combo: ViewCombination,
    pub estimate: Estimate,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub disparity: DisparityMap,
    pub candidates: Vec<Candidate>,
    pub bundles: Vec<ErrorBundle>,
    pub aux: Vec<(usize, usize)>,
}

pub fn estimate_candidates(
    lf: &LightField,
    net: &DispNet,
    params: &ParamStore,
    sampling: &Sampling,
    combos: &[ViewCombination],
) -> Result<Vec<Candidate>> {
    combos
        .par_iter()
        .map(|combo| {
            let views = rotate_inputs(combo.extract(lf)?, combo.orientation);
            let est = net.estimate(params, &views, sampling)?;
            Ok(Candidate {
                combo: *combo,
                estimate: Estimate {
                    coarse: finalize_disparity(&est.coarse, combo)?,
                    residual: finalize_disparity(&est.residual, combo)?,
                    refined: finalize_disparity(&est.refined, combo)?,
                },
            })
        })
        .collect()
}

/// Auxiliary views for `combos`, optionally without the combinations' own views.
pub fn select_aux(
    lf: &LightField,
    preset: &AuxiliaryViews,
    combos: &[ViewCombination],
    exclude_input_views: bool,
) -> Result<Vec<(usize, usize)>> {
    let mut aux = auxiliary_views(lf, preset)?;
    if exclude_input_views {
        aux.retain(|v| !combos.iter().any(|c| c.views().contains(v)));
    }
    if aux.is_empty() {
        return Err(invalid("auxiliary views", "none left after excluding input views"));
    }
    Ok(aux)
}

/// Scores each map against the auxiliary views and fuses them.
pub fn fuse_maps(
    lf: &LightField,
    maps: &[DisparityMap],
    aux: &[(usize, usize)],
    fusion: &FusionConfig,
) -> Result<(DisparityMap, Vec<ErrorBundle>)> {
    let bundles = error_bundles(lf, maps, aux, fusion.occlusion)?;
    let pairs: Vec<(DisparityMap, lfdepth_autodiff::Tensor)> = maps
        .iter()
        .cloned()
        .zip(bundles.iter().map(|b| b.error.clone()))
        .collect();
    Ok((fuse(&pairs, fusion.strategy)?, bundles))
}

pub fn run(lf: &LightField, net: &DispNet, params: &ParamStore, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let combos = enumerate_combinations(lf, &cfg.offsets)?;
    let candidates = estimate_candidates(lf, net, params, &cfg.sampling, &combos)?;
    let aux = select_aux(lf, &cfg.aux, &combos, cfg.exclude_input_views)?;
    let maps: Vec<DisparityMap> = candidates.iter().map(|c| c.estimate.refined.clone()).collect();
    let (disparity, bundles) = fuse_maps(lf, &maps, &aux, &cfg.fusion)?;
    Ok(PipelineOutput {
        disparity,
        candidates,
        bundles,
        aux,
    })
}
