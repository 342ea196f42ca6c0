use rand::Rng;

use super::*;
use crate::datagen::{generate_layout, render_sem, NoiseConfig};

fn sample(h: usize, w: usize, seed: u64) -> SemSample {
    let mask = generate_layout(h.max(8), w.max(8), 0.4, seed).unwrap();
    let s = render_sem(&mask, &NoiseConfig { seed, ..NoiseConfig::default() }, format!("s{seed}")).unwrap();
    if (h, w) == s.dims() {
        s
    } else {
        crate::datagen::resize_sample(&s, h, w).unwrap_or(s)
    }
}

fn toy_sample(seed: u64) -> SemSample {
    // 4x4 toy samples are built by hand because layouts need 8x8
    let mut r = crate::seed::rng(seed);
    let mut pixels: Vec<u8> = (0..16).map(|_| r.random_range(0..2u8)).collect();
    pixels[0] = 0;
    pixels[1] = 1;
    let image = Grid::new(4, 4, (0..16).map(|_| r.random_range(0.05..0.95)).collect()).unwrap();
    SemSample::new("toy", image, LayoutMask::new(4, 4, pixels).unwrap()).unwrap()
}

#[test]
fn unet_output_is_probability_map() {
    let spec = ModelSpec::unet(256, 256, 4, 16);
    let (net, w) = build_model(&spec, 1).unwrap();
    let s = sample(256, 256, 3);
    let p = net.forward(&w, &s.image).unwrap();
    assert_eq!(p.dims(), (256, 256));
    assert!(p.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn toy_parameter_count() {
    let (net, w) = build_model(&ModelSpec::toy_linear(4, 4), 0).unwrap();
    assert_eq!(w.entries.len(), 2);
    assert_eq!(net.num_params(), 16 * 16 + 16);
    assert_eq!(w.num_params(), 272);
}

#[test]
fn unet_parameter_count_matches_layout_arithmetic() {
    // depth 2, base 4: hand-count of every conv/upconv/head tensor
    let c3 = |i: usize, o: usize| i * o * 9 + o;
    let expected = c3(1, 4) + c3(4, 4) + c3(4, 8) + c3(8, 8) // encoder
        + c3(8, 16) + c3(16, 16) // bottleneck
        + (16 * 8 * 4 + 8) + c3(16, 8) + c3(8, 8) // up1 + dec1
        + (8 * 4 * 4 + 4) + c3(8, 4) + c3(4, 4) // up0 + dec0
        + 4 + 1; // head
    let net = Network::new(&ModelSpec::unet(16, 16, 2, 4)).unwrap();
    assert_eq!(net.num_params(), expected);
}

#[test]
fn same_seed_same_weights() {
    let spec = ModelSpec::unet(32, 32, 2, 4);
    assert_eq!(build_model(&spec, 7).unwrap().1, build_model(&spec, 7).unwrap().1);
    assert_ne!(build_model(&spec, 7).unwrap().1, build_model(&spec, 8).unwrap().1);
}

#[test]
fn indivisible_dims_are_rejected() {
    assert!(build_model(&ModelSpec::unet(36, 32, 4, 4), 0).is_err());
    assert!(build_model(&ModelSpec::unet(48, 48, 4, 4), 0).is_ok());
}

#[test]
fn forward_checks_shapes() {
    let (net, w) = build_model(&ModelSpec::unet(16, 16, 2, 4), 0).unwrap();
    let bad = Grid::filled(8, 8, 0.5);
    assert!(net.forward(&w, &bad).is_err());
    let (_, other) = build_model(&ModelSpec::unet(16, 16, 1, 4), 0).unwrap();
    assert!(net.forward(&other, &Grid::filled(16, 16, 0.5)).is_err());
}

#[test]
fn zero_toy_model_outputs_one_half() {
    let (net, w) = build_model(&ModelSpec::toy_linear(4, 4), 0).unwrap();
    let w = w.zeros_like();
    let p = net.forward(&w, &toy_sample(1).image).unwrap();
    assert!(p.as_slice().iter().all(|&v| v == 0.5));
}

#[test]
fn output_responds_to_single_pixel() {
    let (net, w) = build_model(&ModelSpec::unet(32, 32, 2, 4), 5).unwrap();
    let s = sample(32, 32, 1);
    let base = net.forward(&w, &s.image).unwrap();
    let mut bumped = s.image.clone();
    bumped.set(16, 16, bumped.get(16, 16) + 1e-3);
    let moved = net.forward(&w, &bumped).unwrap();
    let delta: f64 = base.as_slice().iter().zip(moved.as_slice()).map(|(a, b)| (a - b).abs()).sum();
    assert!(delta > 0.0);
}

#[test]
fn forward_is_deterministic() {
    let (net, w) = build_model(&ModelSpec::unet(32, 32, 2, 4), 5).unwrap();
    let s = sample(32, 32, 2);
    assert_eq!(net.forward(&w, &s.image).unwrap(), net.forward(&w, &s.image).unwrap());
}

#[test]
fn segmentation_loss_reference_values() {
    let mask = LayoutMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
    let exact = mask.to_grid::<f64>();
    assert!(segmentation_loss(&exact, &mask).unwrap() < 1e-6);
    let half = Grid::filled(2, 2, 0.5);
    assert!((segmentation_loss(&half, &mask).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    let noisy = Grid::new(2, 2, vec![0.3, 0.6, 0.8, 0.1]).unwrap();
    assert!(segmentation_loss(&noisy, &mask).unwrap() > segmentation_loss(&exact, &mask).unwrap());
    assert!(segmentation_loss(&Grid::filled(3, 2, 0.5), &mask).is_err());
}

#[test]
fn logit_loss_agrees_with_probability_loss() {
    let (net, w) = build_model(&ModelSpec::unet(16, 16, 2, 4), 3).unwrap();
    let s = sample(16, 16, 4);
    let (loss, _) = net.loss_and_gradients(&w, &[&s]).unwrap();
    let p = net.forward(&w, &s.image).unwrap();
    assert!((loss - segmentation_loss(&p, &s.mask).unwrap()).abs() < 1e-9);
}

/// Central differences of the f64 loss, evaluated through forward passes only.
fn fd_grad(net: &Network, w: &ModelWeights<f64>, batch: &[&SemSample], entry: usize, idx: usize, h: f64) -> f64 {
    let loss_at = |delta: f64| {
        let mut w2 = w.clone();
        w2.entries[entry].data[idx] += delta;
        batch
            .iter()
            .map(|s| {
                let p = net.forward(&w2, &s.image).unwrap();
                segmentation_loss(&p, &s.mask).unwrap()
            })
            .sum::<f64>()
            / batch.len() as f64
    };
    (loss_at(h) - loss_at(-h)) / (2.0 * h)
}

fn check_f32_grads(net: &Network, w: &ModelWeights<f64>, batch: &[SemSample], seed: u64) {
    let refs: Vec<&SemSample> = batch.iter().collect();
    // gradient computed in f32 through the generic backward pass
    let w32: ModelWeights<f32> = w.cast();
    let scale = 1.0f32 / batch.len() as f32;
    let mut g32: Vec<Vec<f32>> = w32.entries.iter().map(|e| vec![0.0; e.data.len()]).collect();
    for s in batch {
        let img: Vec<f32> = s.image.as_slice().iter().map(|&v| v as f32).collect();
        let m: Vec<f32> = s.mask.pixels().iter().map(|&p| f32::from(p)).collect();
        let pass = net.sample_pass(&w32.entries, &img, &m, scale, Want { params: true, input: false });
        for (a, b) in g32.iter_mut().zip(pass.param_grads) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
    let mut r = crate::seed::rng(seed);
    for _ in 0..20 {
        let entry = r.random_range(0..w.entries.len());
        let idx = r.random_range(0..w.entries[entry].data.len());
        // small step: larger ones can straddle a ReLU kink
        let fd = fd_grad(net, w, &refs, entry, idx, 1e-6);
        let got = f64::from(g32[entry][idx]);
        let rel = (got - fd).abs() / fd.abs().max(1e-4);
        assert!(rel < 1e-3, "{}[{idx}]: {got} vs fd {fd} (rel {rel})", w.entries[entry].name);
    }
}

#[test]
fn toy_gradients_match_finite_differences_in_f32() {
    let (net, w) = build_model(&ModelSpec::toy_linear(16, 16), 2).unwrap();
    let batch = vec![sample(16, 16, 10), sample(16, 16, 11)];
    check_f32_grads(&net, &w, &batch, 99);
}

#[test]
fn unet_gradients_match_finite_differences_in_f32() {
    let (net, w) = build_model(&ModelSpec::unet(16, 16, 2, 4), 2).unwrap();
    let batch = vec![sample(16, 16, 12), sample(16, 16, 13)];
    check_f32_grads(&net, &w, &batch, 100);
    let mut avg = ModelSpec::unet(16, 16, 2, 4);
    avg.pooling = Pooling::Avg;
    avg.activation = Activation::Tanh;
    let (net, w) = build_model(&avg, 2).unwrap();
    check_f32_grads(&net, &w, &batch, 101);
}

#[test]
fn input_gradient_matches_finite_differences() {
    let (net, w) = build_model(&ModelSpec::unet(16, 16, 2, 4), 6).unwrap();
    let s = sample(16, 16, 14);
    let m: Vec<f64> = s.mask.pixels().iter().map(|&p| f64::from(p)).collect();
    let pass = net.sample_pass(&w.entries, s.image.as_slice(), &m, 1.0, Want { params: false, input: true });
    assert!(pass.param_grads.is_empty());
    for idx in [0, 37, 100, 255] {
        let loss_at = |d: f64| {
            let mut img = s.image.as_slice().to_vec();
            img[idx] += d;
            net.sample_pass(&w.entries, &img, &m, 1.0, Want { params: false, input: false }).loss
        };
        let fd = (loss_at(1e-6) - loss_at(-1e-6)) / 2e-6;
        assert!((pass.input_grad[idx] - fd).abs() < 1e-6 * fd.abs().max(1e-3), "pixel {idx}");
        let mask_fd = {
            let at = |d: f64| {
                let mut mm = m.clone();
                mm[idx] += d;
                net.sample_pass(&w.entries, s.image.as_slice(), &mm, 1.0, Want { params: false, input: false }).loss
            };
            (at(1e-6) - at(-1e-6)) / 2e-6
        };
        assert!((pass.mask_grad[idx] - mask_fd).abs() < 1e-6);
    }
}

#[test]
fn duplicated_batch_item_gives_same_gradient() {
    let (net, w) = build_model(&ModelSpec::unet(16, 16, 2, 4), 3).unwrap();
    let s = sample(16, 16, 20);
    let one = compute_gradients(&net, &w, std::slice::from_ref(&s)).unwrap();
    let two = compute_gradients(&net, &w, &[s.clone(), s]).unwrap();
    for (a, b) in one.flat().zip(two.flat()) {
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300) + 1e-18);
    }
    assert_eq!(one.provenance, Provenance::Captured);
}

#[test]
fn saturated_correct_toy_has_vanishing_gradient() {
    let (net, w) = build_model(&ModelSpec::toy_linear(4, 4), 0).unwrap();
    let s = toy_sample(3);
    let mut w = w.zeros_like();
    for (b, &m) in w.entries[1].data.iter_mut().zip(s.mask.pixels()) {
        *b = if m == 1 { 30.0 } else { -30.0 };
    }
    let g = compute_gradients(&net, &w, &[s]).unwrap();
    assert!(g.flat().all(|v| v.abs() < 1e-12));
}

#[test]
fn empty_batch_is_an_error() {
    let (net, w) = build_model(&ModelSpec::toy_linear(4, 4), 0).unwrap();
    assert!(matches!(compute_gradients(&net, &w, &[]), Err(Error::Empty(_))));
}

