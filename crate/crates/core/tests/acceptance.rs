//! Acceptance run: one pass/fail line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as failures but do not fail
//! the process; the reasons are recorded in the project decision log.

mod common;

use std::time::{Duration, Instant};

use lfdepth::autodiff::gradcheck::gradcheck;
use lfdepth::autodiff::{OpKind, Tensor};
use lfdepth::config::Config;
use lfdepth::dataset::LfMode;
use lfdepth::dispnet::{regress, DispNet, DispNetConfig, Sampling};
use lfdepth::fusion::{error_map, error_map_ksmall, fuse, occlusion_mask, FusionConfig, FusionStrategy, OcclusionHandling};
use lfdepth::geometry::{finalize_disparity, rotate_inputs, warp_source_to_center, Side};
use lfdepth::lightfield::{enumerate_combinations, AuxiliaryViews, LightField, Orientation, ViewCombination};
use lfdepth::losses::{gradcheck_loss, LossKind};
use lfdepth::metrics::{bpr, mse_x100, DENSE_THRESHOLDS, SPARSE_THRESHOLDS};
use lfdepth::occlusion::{reconstruct_center, ConfidencePair, OccNet};
use lfdepth::params::ParamStore;
use lfdepth::pfm::{map_from_pfm, map_to_pfm};
use lfdepth::pipeline::{run, PipelineConfig};
use lfdepth::samples::{SampleRange, SampleVector};
use lfdepth::synth::{generate_synthetic, SyntheticSpec};
use lfdepth::train::{train, Model, TrainConfig};
use lfdepth::{DisparityMap, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_RED: &[&str] = &["5"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dense_sampling() -> Sampling {
    Config::for_mode(LfMode::Dense).sampling().unwrap()
}

fn oracle_pipeline(offsets: &[usize], fusion: FusionConfig) -> PipelineConfig {
    PipelineConfig {
        sampling: dense_sampling(),
        offsets: offsets.to_vec(),
        aux: AuxiliaryViews::Default16,
        exclude_input_views: true,
        fusion,
    }
}

fn oracle_net(coarse_to_fine: bool) -> DispNet {
    DispNet::new(
        DispNetConfig {
            coarse_to_fine,
            ..DispNetConfig::oracle()
        },
        3,
    )
    .unwrap()
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst = (String::new(), 0.0f64);
    let mut failed = Vec::new();
    let mut check = |name: &str, err: f64| {
        if !(err < 1e-4) {
            failed.push(name.to_string());
        }
        if err > worst.1 {
            worst = (name.to_string(), err);
        }
    };
    for kind in OpKind::ALL {
        check(kind.name(), gradcheck(kind, 10, 0).unwrap_or(f64::INFINITY));
    }
    for kind in LossKind::ALL {
        check(kind.name(), gradcheck_loss(kind, 10, 0).unwrap_or(f64::INFINITY));
    }
    let t = start.elapsed();
    let ok = failed.is_empty() && t < Duration::from_secs(120);
    outcome(
        ok,
        format!(
            "{} ops and {} losses, worst {} {:.2e}, failed {failed:?}, {:.1}s",
            OpKind::ALL.len(),
            LossKind::ALL.len(),
            worst.0,
            worst.1,
            t.as_secs_f64()
        ),
    )
}

fn fusion_oracle() -> Outcome {
    let start = Instant::now();
    let strategies = [
        FusionStrategy::MinError,
        FusionStrategy::Weighted { n: 1 },
        FusionStrategy::Weighted { n: 2 },
        FusionStrategy::Weighted { n: 3 },
        FusionStrategy::Weighted { n: 4 },
    ];
    let mut mismatches = 0;
    let mut checks = 0;
    for inst in 0..100u64 {
        let mut r = rng(1000 + inst);
        // every fourth instance draws errors from three levels to force ties
        let tied = inst % 4 == 0;
        let stacks: Vec<Tensor> = (0..4)
            .map(|_| {
                Tensor::from_fn(vec![8, 8, 5], |_| {
                    if tied {
                        [0.1, 0.2, 0.3][r.gen_range(0..3)]
                    } else {
                        r.gen_range(0.0..1.0)
                    }
                })
            })
            .collect();
        let maps: Vec<DisparityMap> = (0..4)
            .map(|_| DisparityMap::new(Tensor::rand_uniform(vec![8, 8], -4.0, 4.0, &mut r)).unwrap())
            .collect();
        for q in [0.8, 0.95, 1.0] {
            let mut pairs = Vec::new();
            let mut errors = Vec::new();
            for (eps, d) in stacks.iter().zip(&maps) {
                let mask = occlusion_mask(eps, q).unwrap();
                let e = error_map(eps, &mask).unwrap();
                let (bmask, be) = common::error_map(&common::stack_from_tensor(eps), OcclusionHandling::Quantile { q });
                checks += 2;
                mismatches += (common::tensor_grid(&mask) != bmask) as usize;
                mismatches += (common::tensor_grid(&e) != be) as usize;
                errors.push(be);
                pairs.push((d.clone(), e));
            }
            let grids: Vec<_> = maps.iter().map(common::grid).collect();
            for s in strategies {
                checks += 1;
                mismatches += (common::grid(&fuse(&pairs, s).unwrap()) != common::fuse(&grids, &errors, s)) as usize;
            }
        }
        for k in 1..=5 {
            for eps in &stacks {
                checks += 1;
                let e = error_map_ksmall(eps, k).unwrap();
                let (_, be) = common::error_map(&common::stack_from_tensor(eps), OcclusionHandling::KSmallest { k });
                mismatches += (common::tensor_grid(&e) != be) as usize;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        mismatches == 0 && t < Duration::from_secs(10),
        format!("{mismatches} of {checks} comparisons differ bitwise, {:.2}s", t.as_secs_f64()),
    )
}

fn geometric_recovery() -> Outcome {
    let net = oracle_net(true);
    let pc = oracle_pipeline(&[1, 2, 3], FusionConfig::default());
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [-3.0, -1.0, 0.0, 2.0, 3.0] {
        let start = Instant::now();
        let scene = generate_synthetic(&SyntheticSpec::plane(64, d), 11).unwrap();
        let out = run(&scene.lightfield, &net, &ParamStore::new(), &pc).unwrap();
        let t = start.elapsed();
        let m = mse_x100(&out.disparity, &scene.disparity, 2).unwrap();
        let b = bpr(&out.disparity, &scene.disparity, 0.07, 2).unwrap();
        ok &= m < 0.5 && b < 5.0 && t < Duration::from_secs(30);
        parts.push(format!("d={d}: mse {m:.4} bpr {b:.2}% {:.1}s", t.as_secs_f64()));
    }
    outcome(ok, parts.join("; "))
}

fn coarse_to_fine_benefit() -> Outcome {
    let scene = generate_synthetic(&SyntheticSpec::plane(64, 1.5), 11).unwrap();
    let pc = oracle_pipeline(&[1, 2, 3], FusionConfig::default());
    let mse = |c2f| {
        let out = run(&scene.lightfield, &oracle_net(c2f), &ParamStore::new(), &pc).unwrap();
        mse_x100(&out.disparity, &scene.disparity, 2).unwrap()
    };
    let (refined, coarse) = (mse(true), mse(false));
    outcome(refined < coarse, format!("refined {refined:.5} vs coarse-only {coarse:.5}"))
}

fn occlusion_benefit() -> Outcome {
    let scene = generate_synthetic(&SyntheticSpec::two_planes(64, -1.0, 2.5), 11).unwrap();
    let net = oracle_net(true);
    let mse = |strategy, q| {
        let pc = oracle_pipeline(
            &[2, 3],
            FusionConfig {
                strategy,
                occlusion: OcclusionHandling::Quantile { q },
            },
        );
        let out = run(&scene.lightfield, &net, &ParamStore::new(), &pc).unwrap();
        mse_x100(&out.disparity, &scene.disparity, 2).unwrap()
    };
    let w2 = FusionStrategy::Weighted { n: 2 };
    let (handled, unhandled) = (mse(w2, 0.95), mse(w2, 1.0));
    let min = mse(FusionStrategy::MinError, 0.95);
    let a = handled <= unhandled;
    let b = handled <= min;
    outcome(
        a && b,
        format!(
            "(a) q=0.95 {handled:.4} <= q=1 {unhandled:.4}: {}; (b) weighted(2) {handled:.4} <= min-error {min:.4}: {}",
            if a { "yes" } else { "no" },
            if b { "yes" } else { "no" }
        ),
    )
}

fn smoothed(curve: &[f64], window: usize) -> Vec<f64> {
    curve
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

fn toy_training() -> Outcome {
    let start = Instant::now();
    let cfg = Config::for_mode(LfMode::Dense);
    let model = Model {
        dispnet: DispNet::new(cfg.dispnet.clone(), 3).unwrap(),
        occnet: OccNet::new(cfg.occnet.clone(), 3).unwrap(),
        sampling: cfg.sampling().unwrap(),
    };
    let scenes: Vec<LightField> = (0..8)
        .map(|s| generate_synthetic(&SyntheticSpec::random(64, s), 100 + s).unwrap().lightfield)
        .collect();
    let init = model.init_params(7);
    let tc = TrainConfig {
        epochs: 60,
        seed: 1,
        ..cfg.train.clone()
    };
    let out = train(&model, &scenes, init.clone(), &tc, None).unwrap();
    let curve: Vec<f64> = out.curve.iter().map(|e| e.terms.full).collect();
    let s = smoothed(&curve, 5);
    let (first, last) = (s[0], s[s.len() - 1]);
    let loss_ok = last < 0.7 * first;

    let validation: Vec<_> = (0..2)
        .map(|s| generate_synthetic(&SyntheticSpec::random(64, 50 + s), 300 + s).unwrap())
        .collect();
    let pc = cfg.pipeline().unwrap();
    let val_mse = |params: &ParamStore| {
        validation
            .iter()
            .map(|v| {
                let est = run(&v.lightfield, &model.dispnet, params, &pc).unwrap();
                mse_x100(&est.disparity, &v.disparity, 2).unwrap()
            })
            .sum::<f64>()
            / validation.len() as f64
    };
    let (before, after) = (val_mse(&init), val_mse(&out.params));

    let mut worst_sum = 0.0f64;
    for v in &validation {
        let lf = &v.lightfield;
        for combo in enumerate_combinations(lf, &[1, 2, 3]).unwrap() {
            let views = rotate_inputs(combo.extract(lf).unwrap(), combo.orientation);
            let est = model.dispnet.estimate(&out.params, &views, &model.sampling).unwrap();
            let lc = warp_source_to_center(&views[0], &est.refined, Side::Left).unwrap();
            let rc = warp_source_to_center(&views[2], &est.refined, Side::Right).unwrap();
            let pair = model.occnet.predict(&out.params, &lc, &rc, &views[1], &est.refined).unwrap();
            for (l, r) in pair.left().data().iter().zip(pair.right().data()) {
                worst_sum = worst_sum.max((l + r - 1.0).abs());
            }
        }
    }
    let t = start.elapsed();
    let ok = loss_ok && after < before && worst_sum <= 1e-6 && t < Duration::from_secs(30 * 60);
    outcome(
        ok,
        format!(
            "smoothed l_full {first:.4} -> {last:.4} (ratio {:.3}); validation mse {before:.3} -> {after:.3}; max |O_l+O_r-1| {worst_sum:.1e}; {:.0}s",
            last / first,
            t.as_secs_f64()
        ),
    )
}

fn invariant_suite() -> Outcome {
    let mut failures: Vec<&str> = Vec::new();
    let mut r = rng(77);

    // coarse-plus-residual identity and range confinement
    let small = DispNetConfig {
        channels: 4,
        residual_blocks: 1,
        filter_channels: 4,
        head_channels: 4,
        ..DispNetConfig::default()
    };
    let sampling =
        Sampling::from_ranges(&SampleRange::new(-3.0, 3.0, 1.0), &SampleRange::new(-0.5, 0.5, 0.1)).unwrap();
    for (cfg, params_seed) in [(small, Some(3u64)), (DispNetConfig::oracle(), None)] {
        let net = DispNet::new(cfg, 3).unwrap();
        let params = params_seed.map_or_else(ParamStore::new, |s| net.init_params(&mut rng(s)));
        for _ in 0..10 {
            let views: [Image; 3] =
                std::array::from_fn(|_| Image::new(Tensor::rand_uniform(vec![10, 9, 3], 0.0, 1.0, &mut r)).unwrap());
            let e = net.estimate(&params, &views, &sampling).unwrap();
            let (c, s) = (&sampling.coarse, &sampling.residual);
            for i in 0..90 {
                let (dc, dr, d) = (e.coarse.values()[i], e.residual.values()[i], e.refined.values()[i]);
                if (d - (dc + dr)).abs() > 1e-12 {
                    failures.push("refined = coarse + residual");
                }
                if dc < c.min() - 1e-12 || dc > c.max() + 1e-12 || dr < s.min() - 1e-12 || dr > s.max() + 1e-12 {
                    failures.push("regression range");
                }
            }
        }
    }
    for _ in 0..100 {
        let samples = SampleVector::new(-2.0, 2.0, 0.5).unwrap();
        let scores = Tensor::rand_uniform(vec![samples.len(), 4, 4], -50.0, 50.0, &mut r);
        let m = regress(&scores, &samples).unwrap();
        if m.values().iter().any(|&v| v < -2.0 - 1e-12 || v > 2.0 + 1e-12) {
            failures.push("regression range");
        }
    }

    // rotation round trips and baseline scaling
    for b in 1..=3 {
        let combo = ViewCombination::new((3, 3), Orientation::Column, b).unwrap();
        let rotated = DisparityMap::new(Tensor::rand_uniform(vec![7, 5], -4.0, 4.0, &mut r)).unwrap();
        let out = finalize_disparity(&rotated, &combo).unwrap();
        if out.rotate(1) != rotated.map(|v| v / b as f64) {
            failures.push("rotation round trip");
        }
        let img = Image::new(Tensor::rand_uniform(vec![5, 7, 2], 0.0, 1.0, &mut r)).unwrap();
        if img.rotate(1).rotate(-1) != img || img.rotate(1).rotate(1).rotate(1).rotate(1) != img {
            failures.push("rotation round trip");
        }
    }
    let row3 = ViewCombination::new((3, 3), Orientation::Row, 3).unwrap();
    let d = DisparityMap::new(Tensor::rand_uniform(vec![6, 6], -9.0, 9.0, &mut r)).unwrap();
    let scaled = finalize_disparity(&d, &row3).unwrap();
    if d.values().iter().zip(scaled.values()).any(|(a, b)| (a / 3.0 - b).abs() > 1e-15) {
        failures.push("baseline scaling");
    }

    // convexity of reconstruction and weighted fusion
    for _ in 0..100 {
        let lc = Image::new(Tensor::rand_uniform(vec![6, 5, 3], 0.0, 1.0, &mut r)).unwrap();
        let rc = Image::new(Tensor::rand_uniform(vec![6, 5, 3], 0.0, 1.0, &mut r)).unwrap();
        let ol = Tensor::rand_uniform(vec![6, 5], 0.0, 1.0, &mut r);
        let pair = ConfidencePair::new(ol.clone(), ol.map(|v| 1.0 - v)).unwrap();
        let rec = reconstruct_center(&lc, &rc, &pair).unwrap();
        for i in 0..rec.tensor().len() {
            let (a, b) = (lc.tensor().data()[i], rc.tensor().data()[i]);
            let v = rec.tensor().data()[i];
            if v < a.min(b) - 1e-15 || v > a.max(b) + 1e-15 {
                failures.push("reconstruction convexity");
            }
        }
        let pairs: Vec<_> = (0..4)
            .map(|_| {
                (
                    DisparityMap::new(Tensor::rand_uniform(vec![5, 5], -3.0, 3.0, &mut r)).unwrap(),
                    Tensor::rand_uniform(vec![5, 5], 0.0, 1.0, &mut r),
                )
            })
            .collect();
        let fused = fuse(&pairs, FusionStrategy::Weighted { n: 4 }).unwrap();
        for p in 0..25 {
            let vals: Vec<f64> = pairs.iter().map(|(d, _)| d.values()[p]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if fused.values()[p] < lo - 1e-12 || fused.values()[p] > hi + 1e-12 {
                failures.push("fusion convexity");
            }
        }
    }

    // mask occupancy
    for i in 0..100 {
        let q = 0.05 + 0.95 * (i as f64 / 99.0);
        let eps = Tensor::rand_uniform(vec![8, 8, 5], 0.0, 1.0, &mut r);
        let mask = occlusion_mask(&eps, q).unwrap();
        let ones = mask.data().iter().filter(|&&m| m == 1.0).count() as f64;
        if ones / 64.0 > (1.0 - q) + 1.0 / 64.0 + 1e-12 {
            failures.push("mask occupancy");
        }
    }

    failures.sort();
    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "identity, range, rotation, scaling, convexity and occupancy checks hold".to_string()
        } else {
            format!("violated: {failures:?}")
        },
    )
}

fn format_fidelity() -> Outcome {
    let mut r = rng(5);
    let mut differing = 0;
    for _ in 0..1000 {
        let (nx, ny) = (r.gen_range(1..24), r.gen_range(1..24));
        let t = Tensor::rand_uniform(vec![nx, ny], -100.0, 100.0, &mut r).map(|v| v as f32 as f64);
        let map = DisparityMap::new(t).unwrap();
        let back = map_from_pfm(&map_to_pfm(&map)).unwrap();
        if map.values().iter().zip(back.values()).any(|(a, b)| a.to_bits() != b.to_bits()) || back.nx() != nx {
            differing += 1;
        }
    }
    let cfg = Config::for_mode(LfMode::Dense);
    let net = DispNet::new(cfg.dispnet.clone(), 3).unwrap();
    let params = net.init_params(&mut rng(9));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.lfdw");
    params.save(&path).unwrap();
    let loaded = ParamStore::load(&path).unwrap();
    let scene = generate_synthetic(&SyntheticSpec::random(32, 4), 4).unwrap();
    let pc = PipelineConfig {
        offsets: vec![1],
        ..cfg.pipeline().unwrap()
    };
    let a = run(&scene.lightfield, &net, &params, &pc).unwrap().disparity;
    let b = run(&scene.lightfield, &net, &loaded, &pc).unwrap().disparity;
    let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(
        differing == 0 && same && loaded == params,
        format!(
            "{differing} of 1000 PFM round trips differ; checkpoint inference {}",
            if same { "identical" } else { "differs" }
        ),
    )
}

fn metric_oracle() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (nx, ny) = (r.gen_range(5..40), r.gen_range(5..40));
        let border = r.gen_range(0..2);
        let gt = DisparityMap::new(Tensor::rand_uniform(vec![nx, ny], -4.0, 4.0, &mut r)).unwrap();
        let noise = Tensor::rand_uniform(vec![nx, ny], -0.5, 0.5, &mut r);
        let d = DisparityMap::from_fn(nx, ny, |x, y| gt.at(x, y) + noise.at(&[x, y]));
        worst = worst.max((mse_x100(&d, &gt, border).unwrap() - common::mse_x100(&d, &gt, border)).abs());
        for t in DENSE_THRESHOLDS.into_iter().chain(SPARSE_THRESHOLDS) {
            worst = worst.max((bpr(&d, &gt, t, border).unwrap() - common::bpr(&d, &gt, t, border)).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max deviation {worst:.1e} over 200 pairs"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("1", "gradient suite", gradient_suite),
        ("2", "fusion oracle equivalence", fusion_oracle),
        ("3", "untrained geometric recovery", geometric_recovery),
        ("4", "coarse-to-fine benefit", coarse_to_fine_benefit),
        ("5", "occlusion-handling benefit", occlusion_benefit),
        ("6", "toy joint training", toy_training),
        ("7", "invariant suite", invariant_suite),
        ("8", "format fidelity", format_fidelity),
        ("9", "metric oracle", metric_oracle),
    ];
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| p == id) {
            continue;
        }
        let o = f();
        let known = KNOWN_RED.contains(&id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id} {name}: {tag} - {}", o.detail);
        if !o.pass && !known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
