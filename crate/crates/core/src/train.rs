//! Joint unsupervised training of DispNet and OccNet.
//!
//! An epoch visits every training light field once in a shuffled order. Each
//! visit draws a random crop and a random view combination and takes one
//! Adam step on both networks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lfdepth_autodiff::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispnet::{DispNet, DispVars, Sampling};
use crate::error::{invalid, io_err, Error, Result};
use crate::geometry::{rotate_inputs, warp_graph};
use crate::image::Image;
use crate::lightfield::{enumerate_combinations, LightField};
use crate::losses::{full_graph, BranchInputs, LossTerms, LossVars, LossWeights};
use crate::occlusion::{reconstruct_graph, OccNet};
use crate::params::{Binding, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub crop: usize,
    pub seed: u64,
    pub lr: f64,
    /// Learning-rate factor applied every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    /// Baselines of the combinations drawn during training.
    pub offsets: Vec<usize>,
    /// Off fixes both confidences at 0.5.
    pub use_occnet: bool,
    /// Checkpoint period in epochs; 0 writes only the initial and final ones.
    pub checkpoint_every: usize,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            crop: 32,
            seed: 0,
            lr: 1e-3,
            decay: 0.8,
            decay_every: 50,
            offsets: vec![1, 2, 3],
            use_occnet: true,
            checkpoint_every: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi((epoch / self.decay_every.max(1)) as i32)
    }

    pub fn validate(&self, sampling: &Sampling) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid("train config", "need lr > 0 and 0 < decay <= 1"));
        }
        if self.decay_every == 0 {
            return Err(invalid("train config", "decay period must be positive"));
        }
        if self.offsets.is_empty() {
            return Err(invalid("train config", "no combination offsets"));
        }
        let reach = sampling.coarse.min().abs().max(sampling.coarse.max().abs());
        if (self.crop as f64) < 2.0 * reach {
            return Err(invalid(
                "train config",
                format!("crop {} is below twice the largest coarse sample {reach}", self.crop),
            ));
        }
        Ok(())
    }
}

/// Plain Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

impl Adam {
    /// Updates every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, grad) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| invalid("optimizer", format!("gradient for unknown parameter {name}")))?;
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(grad.shape().to_vec()), Tensor::zeros(grad.shape().to_vec())));
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, (w, &g)) in p.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub terms: LossTerms,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ParamStore,
    pub curve: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
}

/// The two networks and the sample vectors they are trained with.
#[derive(Debug, Clone)]
pub struct Model {
    pub dispnet: DispNet,
    pub occnet: OccNet,
    pub sampling: Sampling,
}

impl Model {
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = self.dispnet.init_params(&mut rng);
        p.extend(self.occnet.init_params(&mut rng));
        p
    }

    /// Loss graph of one row-form `[left, center, right]` triple.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        b: &mut Binding,
        views: &[Image; 3],
        use_occnet: bool,
        weights: &LossWeights,
    ) -> Result<LossVars> {
        let [l, c, r] = [
            g.constant(views[0].to_chw())?,
            g.constant(views[1].to_chw())?,
            g.constant(views[2].to_chw())?,
        ];
        let DispVars {
            coarse,
            residual,
            refined,
        } = self.dispnet.forward_graph(g, b, [l, c, r], &self.sampling)?;
        let warps = |g: &mut Graph, d| -> Result<BranchInputs> {
            Ok(BranchInputs {
                lc: warp_graph(g, l, d, 1.0)?,
                rc: warp_graph(g, r, d, -1.0)?,
                disparity: d,
            })
        };
        let fine = warps(g, refined)?;
        let coarse = match residual {
            Some(_) => Some(warps(g, coarse)?),
            None => None,
        };
        let (nx, ny) = (views[1].nx(), views[1].ny());
        let pair = if use_occnet {
            self.occnet.confidence_graph(g, b, fine.lc, fine.rc, c, refined)?
        } else {
            g.constant(Tensor::full(vec![2, nx, ny], 0.5))?
        };
        let rec = reconstruct_graph(g, fine.lc, fine.rc, pair)?;
        full_graph(g, c, fine, coarse, pair, rec, weights)
    }
}

fn check_finite(t: &LossTerms, epoch: usize) -> Result<()> {
    let named = [
        ("l_full", t.full),
        ("l_wpm", t.wpm),
        ("l_rec", t.rec),
        ("l_ssim", t.ssim),
        ("l_smd", t.smd),
        ("l_smo", t.smo),
    ];
    for (term, value) in named {
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, term, value });
        }
    }
    Ok(())
}

fn mean_terms(ts: &[LossTerms]) -> LossTerms {
    let n = ts.len() as f64;
    let mut m = LossTerms::default();
    for t in ts {
        m.full += t.full / n;
        m.wpm += t.wpm / n;
        m.rec += t.rec / n;
        m.ssim += t.ssim / n;
        m.smd += t.smd / n;
        m.smo += t.smo / n;
    }
    m
}

const CURVE_HEADER: [&str; 8] = ["epoch", "lr", "l_full", "l_wpm", "l_rec", "l_ssim", "l_smd", "l_smo"];

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    lr: f64,
    l_full: f64,
    l_wpm: f64,
    l_rec: f64,
    l_ssim: f64,
    l_smd: f64,
    l_smo: f64,
}

/// Writes the loss curve as CSV; the header is written even for an empty curve.
pub fn write_curve(path: &Path, curve: &[EpochLog]) -> Result<()> {
    let err = |e: csv::Error| invalid("loss curve", e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(err)?;
    w.write_record(CURVE_HEADER).map_err(err)?;
    for e in curve {
        let t = e.terms;
        w.serialize(CurveRow {
            epoch: e.epoch,
            lr: e.lr,
            l_full: t.full,
            l_wpm: t.wpm,
            l_rec: t.rec,
            l_ssim: t.ssim,
            l_smd: t.smd,
            l_smo: t.smo,
        })
        .map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Trains from `params`. With `out_dir`, checkpoints (`epoch-NNNN.lfdw`,
/// starting with epoch 0) and `loss.csv` are written there.
pub fn train(
    model: &Model,
    scenes: &[LightField],
    mut params: ParamStore,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    cfg.validate(&model.sampling)?;
    if scenes.is_empty() {
        return Err(invalid("training", "no training light fields"));
    }
    for lf in scenes {
        let (nx, ny) = lf.spatial_size();
        if nx < cfg.crop || ny < cfg.crop {
            return Err(invalid("training", format!("{nx}x{ny} light field is smaller than the crop")));
        }
        enumerate_combinations(lf, &cfg.offsets)?;
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut checkpoints = Vec::new();
    let mut save = |params: &ParamStore, epoch: usize| -> Result<()> {
        if let Some(dir) = out_dir {
            let path = dir.join(format!("epoch-{epoch:04}.lfdw"));
            params.save(&path)?;
            checkpoints.push(path);
        }
        Ok(())
    };
    save(&params, 0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::default();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut terms = Vec::with_capacity(scenes.len());
        for &s in &order {
            let lf = &scenes[s];
            let (nx, ny) = lf.spatial_size();
            let x0 = rng.gen_range(0..=nx - cfg.crop);
            let y0 = rng.gen_range(0..=ny - cfg.crop);
            let crop = lf.crop(x0, y0, cfg.crop, cfg.crop)?;
            let combos = enumerate_combinations(&crop, &cfg.offsets)?;
            let combo = combos[rng.gen_range(0..combos.len())];
            let views = rotate_inputs(combo.extract(&crop)?, combo.orientation);

            let mut g = Graph::new();
            let mut b = Binding::new(&params, true);
            let vars = model.loss_graph(&mut g, &mut b, &views, cfg.use_occnet, &cfg.weights)?;
            let t = vars.values(&g);
            check_finite(&t, epoch + 1)?;
            let grads = g.backward(vars.full)?;
            let grads = b.gradients(&grads);
            if let Some((name, _)) = grads.iter().find(|(_, t)| !t.is_finite()) {
                return Err(invalid("training", format!("non-finite gradient for {name} in epoch {}", epoch + 1)));
            }
            adam.step(&mut params, &grads, lr)?;
            terms.push(t);
        }
        curve.push(EpochLog {
            epoch: epoch + 1,
            lr,
            terms: mean_terms(&terms),
        });
        let last = epoch + 1 == cfg.epochs;
        if last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            save(&params, epoch + 1)?;
        }
    }
    if let Some(dir) = out_dir {
        write_curve(&dir.join("loss.csv"), &curve)?;
    }
    Ok(TrainOutput {
        params,
        curve,
        checkpoints,
    })
}
