use lfdepth::dispnet::{DispNet, DispNetConfig, Sampling};
use lfdepth::lightfield::LightField;
use lfdepth::occlusion::{OccNet, OccNetConfig};
use lfdepth::params::ParamStore;
use lfdepth::samples::SampleRange;
use lfdepth::synth::{generate_synthetic, SyntheticSpec};
use lfdepth::train::{train, Model, TrainConfig};

fn model() -> Model {
    let dispnet = DispNetConfig {
        channels: 4,
        residual_blocks: 1,
        filter_channels: 4,
        head_channels: 4,
        ..DispNetConfig::default()
    };
    let occnet = OccNetConfig {
        base_channels: 4,
        max_channels: 8,
        ..OccNetConfig::default()
    };
    Model {
        dispnet: DispNet::new(dispnet, 3).unwrap(),
        occnet: OccNet::new(occnet, 3).unwrap(),
        sampling: Sampling::from_ranges(&SampleRange::new(-4.0, 4.0, 1.0), &SampleRange::new(-0.5, 0.5, 0.1)).unwrap(),
    }
}

fn scenes() -> Vec<LightField> {
    (0..2)
        .map(|s| generate_synthetic(&SyntheticSpec::random(20, s), s).unwrap().lightfield)
        .collect()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        crop: 12,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_curve() {
    let (m, data) = (model(), scenes());
    let a = train(&m, &data, m.init_params(1), &config(3), None).unwrap();
    let b = train(&m, &data, m.init_params(1), &config(3), None).unwrap();
    assert_eq!(a.curve.len(), 3);
    for (x, y) in a.curve.iter().zip(&b.curve) {
        assert!((x.terms.full - y.terms.full).abs() < 1e-6);
    }
    assert_eq!(a.params, b.params);
    let c = train(&m, &data, m.init_params(1), &TrainConfig { seed: 5, ..config(3) }, None).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn zero_epochs_checkpoints_the_initialization() {
    let (m, data) = (model(), scenes());
    let dir = tempfile::tempdir().unwrap();
    let init = m.init_params(2);
    let out = train(&m, &data, init.clone(), &config(0), Some(dir.path())).unwrap();
    assert!(out.curve.is_empty());
    assert_eq!(out.checkpoints, vec![dir.path().join("epoch-0000.lfdw")]);
    assert_eq!(ParamStore::load(&out.checkpoints[0]).unwrap(), init);
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.trim(), "epoch,lr,l_full,l_wpm,l_rec,l_ssim,l_smd,l_smo");
}

#[test]
fn checkpoints_and_curve_are_written() {
    let (m, data) = (model(), scenes());
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { checkpoint_every: 2, ..config(3) };
    let out = train(&m, &data, m.init_params(3), &cfg, Some(dir.path())).unwrap();
    let names: Vec<_> = out.checkpoints.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(names, ["epoch-0000.lfdw", "epoch-0002.lfdw", "epoch-0003.lfdw"]);
    assert_eq!(ParamStore::load(out.checkpoints.last().unwrap()).unwrap(), out.params);
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn disabling_occnet_freezes_its_weights() {
    let (m, data) = (model(), scenes());
    let init = m.init_params(6);
    let out = train(&m, &data, init.clone(), &TrainConfig { use_occnet: false, ..config(2) }, None).unwrap();
    for (name, t) in out.params.iter() {
        if name.starts_with("occnet/") {
            assert_eq!(Some(t), init.get(name), "{name} moved");
        }
    }
    let moved = out.params.iter().any(|(n, t)| n.starts_with("dispnet/") && Some(t) != init.get(n));
    assert!(moved);
}

#[test]
fn undersized_crop_rejected() {
    let (m, data) = (model(), scenes());
    assert!(train(&m, &data, m.init_params(0), &TrainConfig { crop: 6, ..config(1) }, None).is_err());
    assert!(train(&m, &[], m.init_params(0), &config(1), None).is_err());
}

#[test]
fn lr_follows_step_schedule() {
    let cfg = TrainConfig::default();
    for (epoch, k) in [(0, 0), (49, 0), (50, 1), (99, 1), (100, 2), (249, 4)] {
        let expected = 1e-3 * 0.8f64.powi(k);
        assert!((cfg.lr_at(epoch) - expected).abs() <= 1e-15 * expected, "epoch {epoch}");
    }
}
