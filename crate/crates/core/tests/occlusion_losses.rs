use lfdepth::autodiff::{Graph, Tensor};
use lfdepth::losses::{loss_rec, loss_smooth, loss_ssim, loss_wpm, rec_graph, ssim};
use lfdepth::occlusion::{reconstruct_center, ConfidencePair, OccMode, OccNet, OccNetConfig};
use lfdepth::params::Binding;
use lfdepth::{DisparityMap, Image};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn image(nx: usize, ny: usize, seed: u64) -> Image {
    Image::new(Tensor::rand_uniform(vec![nx, ny, 3], 0.0, 1.0, &mut rng(seed))).unwrap()
}

fn random_pair(nx: usize, ny: usize, seed: u64) -> ConfidencePair {
    let l = Tensor::rand_uniform(vec![nx, ny], 0.0, 1.0, &mut rng(seed));
    let r = l.map(|v| 1.0 - v);
    ConfidencePair::new(l, r).unwrap()
}

fn mae(a: &Image, b: &Image) -> f64 {
    let (x, y) = (a.tensor().data(), b.tensor().data());
    x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64
}

proptest! {
    #[test]
    fn reconstruction_is_convex(nx in 1usize..9, ny in 1usize..9, seed in 0u64..1000) {
        let (lc, rc) = (image(nx, ny, seed), image(nx, ny, seed + 1));
        let rec = reconstruct_center(&lc, &rc, &random_pair(nx, ny, seed + 2)).unwrap();
        for i in 0..rec.tensor().len() {
            let (a, b, r) = (lc.tensor().data()[i], rc.tensor().data()[i], rec.tensor().data()[i]);
            prop_assert!(r >= a.min(b) - 1e-15 && r <= a.max(b) + 1e-15);
        }
    }

    #[test]
    fn closed_form_swap_swaps_pair(nx in 2usize..9, ny in 2usize..9, seed in 0u64..1000) {
        let cfg = OccNetConfig { mode: OccMode::ClosedForm, ..OccNetConfig::default() };
        let net = OccNet::new(cfg, 3).unwrap();
        let params = net.init_params(&mut rng(0));
        let (lc, rc, c) = (image(nx, ny, seed), image(nx, ny, seed + 1), image(nx, ny, seed + 2));
        let d = DisparityMap::constant(nx, ny, 0.5);
        let a = net.predict(&params, &lc, &rc, &c, &d).unwrap();
        let b = net.predict(&params, &rc, &lc, &c, &d).unwrap();
        prop_assert_eq!(b, a.swapped());
    }

    #[test]
    fn learned_pair_sums_to_one(nx in 3usize..14, ny in 3usize..14, seed in 0u64..100) {
        let net = OccNet::new(OccNetConfig::default(), 3).unwrap();
        let params = net.init_params(&mut rng(seed));
        let (lc, rc, c) = (image(nx, ny, seed), image(nx, ny, seed + 1), image(nx, ny, seed + 2));
        let d = DisparityMap::from_fn(nx, ny, |x, y| x as f64 * 0.2 - y as f64 * 0.1);
        let p = net.predict(&params, &lc, &rc, &c, &d).unwrap();
        prop_assert_eq!((p.nx(), p.ny()), (nx, ny));
        for (l, r) in p.left().data().iter().zip(p.right().data()) {
            prop_assert!((l + r - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_terms_are_bounded(nx in 3usize..10, ny in 3usize..10, seed in 0u64..1000) {
        let (lc, rc, c) = (image(nx, ny, seed), image(nx, ny, seed + 1), image(nx, ny, seed + 2));
        let pair = random_pair(nx, ny, seed + 3);
        let d = DisparityMap::new(Tensor::rand_uniform(vec![nx, ny], -3.0, 3.0, &mut rng(seed + 4))).unwrap();
        prop_assert!(loss_rec(&reconstruct_center(&lc, &rc, &pair).unwrap(), &c).unwrap() >= 0.0);
        prop_assert!(loss_wpm(&lc, &rc, &c, &pair).unwrap() >= 0.0);
        prop_assert!(loss_smooth(&d, &c, 100.0).unwrap() >= 0.0);
        let s = loss_ssim(&lc, &rc, &c).unwrap();
        prop_assert!((0.0..=2.0).contains(&s), "ssim loss {}", s);
    }

    #[test]
    fn half_pair_is_symmetric_photometric(nx in 1usize..9, ny in 1usize..9, seed in 0u64..1000) {
        let (lc, rc, c) = (image(nx, ny, seed), image(nx, ny, seed + 1), image(nx, ny, seed + 2));
        let w = loss_wpm(&lc, &rc, &c, &ConfidencePair::uniform(nx, ny, 0.5).unwrap()).unwrap();
        let plain = 0.5 * (mae(&lc, &c) + mae(&rc, &c));
        prop_assert!((w - plain).abs() < 1e-12, "{} vs {}", w, plain);
    }
}

#[test]
fn ssim_of_image_with_itself_is_one() {
    let a = image(8, 8, 9);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn rec_loss_reaches_occnet_parameters() {
    let net = OccNet::new(OccNetConfig::default(), 3).unwrap();
    let params = net.init_params(&mut rng(5));
    let (nx, ny) = (12, 10);
    let mut g = Graph::new();
    let mut b = Binding::new(&params, true);
    let lc = g.constant(image(nx, ny, 1).to_chw()).unwrap();
    let rc = g.constant(image(nx, ny, 2).to_chw()).unwrap();
    let c = g.constant(image(nx, ny, 3).to_chw()).unwrap();
    let d = g.constant(Tensor::full(vec![nx, ny], 0.3)).unwrap();
    let pair = net.confidence_graph(&mut g, &mut b, lc, rc, c, d).unwrap();
    let ol = g.slice(pair, 0, 0, 1).unwrap();
    let or = g.slice(pair, 0, 1, 2).unwrap();
    let ol = g.expand(ol, &[3, nx, ny]).unwrap();
    let or = g.expand(or, &[3, nx, ny]).unwrap();
    let a = g.mul(ol, lc).unwrap();
    let bb = g.mul(or, rc).unwrap();
    let rec = g.add(a, bb).unwrap();
    let loss = rec_graph(&mut g, rec, c).unwrap();
    let grads = g.backward(loss).unwrap();
    let grads = b.gradients(&grads);
    assert_eq!(grads.len(), net.param_specs().len());
    for (name, t) in &grads {
        assert!(t.data().iter().any(|&v| v != 0.0), "{name} has zero gradient");
    }
}
