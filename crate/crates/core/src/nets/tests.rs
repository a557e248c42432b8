use super::*;
use crate::adcore::{gradcheck_inputs, reduce_mean_abs, Tape, DEFAULT_EPS};
use crate::array::Array;
use crate::diffisp::IspParams;
use crate::exec::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Array<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

fn small() -> NetConfig {
    NetConfig { depth: 2, width: 4, kernel: 3, activation: Activation::Leaky }
}

fn perturb(bundle: &mut ModelBundle, seed: u64, scale: f32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in bundle.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += scale * rng.random_range(-1.0f32..1.0));
    }
}

fn isp() -> IspParams {
    IspParams {
        wb_gains: [1.3, 1.0, 1.1],
        ccm: [1.2, -0.1, -0.1, -0.1, 1.2, -0.1, 0.0, -0.2, 1.2],
        alpha_tm: 0.3,
        ..IspParams::identity()
    }
}

#[test]
fn fresh_fusion_block_is_identity() {
    let net = Denoiser::new("raw", 4, &small(), Fusion::Gated, 1).unwrap();
    let t = Tape::<f64>::new();
    let b = net.bind(&t, false);
    let x = t.constant(&random(&[1, 4, 5, 5], 0.0, 1.0, 2));
    let zero = t.constant(&Array::zeros_f64([1, 4, 5, 5]));
    let y = nfb_fuse(x, zero, &b.tensors[..6], Activation::Leaky).unwrap();
    for (a, e) in y.value().iter().zip(x.value().iter()) {
        assert!((a - e).abs() <= 1e-6);
    }
}

#[test]
fn saturated_gate_doubles_projection() {
    let mut net = Denoiser::new("raw", 4, &small(), Fusion::Gated, 1).unwrap();
    net.params[5].value.data_mut().iter_mut().for_each(|v| *v = 60.0);
    let t = Tape::<f64>::new();
    let b = net.bind(&t, false);
    let x = t.constant(&random(&[1, 4, 3, 3], 0.0, 1.0, 2));
    let m = t.constant(&random(&[1, 4, 3, 3], 0.0, 0.1, 3));
    let y = nfb_fuse(x, m, &b.tensors[..6], Activation::Leaky).unwrap();
    for (a, e) in y.value().iter().zip(x.value().iter()) {
        assert!((a - 2.0 * e).abs() <= 1e-9);
    }
    let bad = t.constant(&Array::zeros_f64([1, 4, 2, 3]));
    assert!(nfb_fuse(x, bad, &b.tensors[..6], Activation::Leaky).is_err());
}

#[test]
fn fusion_block_gradcheck() {
    let mut bundle = ModelBundle::new(ModelKind::RawOnly, &small(), Fusion::Gated, 4).unwrap();
    perturb(&mut bundle, 5, 0.3);
    let net = bundle.raw.clone().unwrap();
    let mut inputs = vec![random(&[1, 4, 4, 4], 0.1, 0.9, 6), random(&[1, 4, 4, 4], 0.01, 0.1, 7)];
    inputs.extend(net.arrays::<f64>().into_iter().take(6));
    let r = gradcheck_inputs(
        |xs| Ok(nfb_fuse(xs[0], xs[1], &xs[2..8], Activation::Leaky)?.square()?.sum()),
        &inputs,
        None,
        DEFAULT_EPS,
        Exec::Parallel,
    )
    .unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}

#[test]
fn zero_heads_make_denoisers_identity() {
    let bundle = ModelBundle::new(ModelKind::Dual, &small(), Fusion::Gated, 3).unwrap();
    let t = Tape::<f64>::new();
    let b = bundle.bind(&t, false);
    let packed = t.constant(&random(&[1, 4, 6, 6], -0.1, 1.1, 1));
    let nmap = t.constant(&random(&[1, 4, 6, 6], 0.0, 0.1, 2));
    let out = denoise_raw(packed, nmap, b.raw.as_ref().unwrap()).unwrap();
    assert_eq!(out.shape(), packed.shape());
    assert_eq!(&*out.value(), &*packed.value());

    let srgb = t.constant(&random(&[1, 3, 6, 6], 0.0, 1.0, 3));
    let zero = t.constant(&Array::zeros_f64([1, 3, 6, 6]));
    let out = denoise_srgb(srgb, zero, b.srgb.as_ref().unwrap()).unwrap();
    assert_eq!(&*out.value(), &*srgb.value());
}

#[test]
fn fresh_dual_reproduces_plain_isp() {
    let bundle = ModelBundle::new(ModelKind::Dual, &NetConfig::default(), Fusion::Gated, 9).unwrap();
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let t = Tape::<f32>::new();
    let noisy = t.constant(&random(&[1, 1, 16, 16], 0.0, 0.8, 4).map(|v| v as f32));
    let b = bundle.bind(&t, false);
    let out = forward_dual(noisy, &np, &isp(), &b).unwrap();
    let plain = run_isp(noisy, &isp()).unwrap();
    assert_eq!(&*out.raw.value(), &*noisy.value());
    for (a, e) in out.srgb.value().iter().zip(plain.value().iter()) {
        assert!((a - e).abs() <= 1e-6);
    }
}

#[test]
fn forward_dual_is_deterministic() {
    let mut bundle = ModelBundle::new(ModelKind::Dual, &NetConfig::default(), Fusion::Gated, 9).unwrap();
    perturb(&mut bundle, 1, 0.05);
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let x = random(&[1, 1, 16, 16], 0.0, 0.8, 4).map(|v| v as f32);
    let run = || {
        let t = Tape::<f32>::new();
        let out = forward_dual(t.constant(&x), &np, &isp(), &bundle.bind(&t, false)).unwrap();
        (out.raw.to_array(), out.srgb.to_array())
    };
    assert_eq!(run(), run());
}

#[test]
fn srgb_only_bundle_is_the_isp_srgb_configuration() {
    let mut bundle = ModelBundle::new(ModelKind::SrgbOnly, &small(), Fusion::Gated, 2).unwrap();
    perturb(&mut bundle, 3, 0.1);
    assert_eq!(bundle.kind(), ModelKind::SrgbOnly);
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let t = Tape::<f64>::new();
    let noisy = t.constant(&random(&[1, 1, 8, 8], 0.0, 0.8, 4));
    let b = bundle.bind(&t, false);
    let out = forward_dual(noisy, &np, &isp(), &b).unwrap();
    assert_eq!(&*out.raw.value(), &*noisy.value());
    let nmap4 = crate::rawmodel::noise_map(pack(noisy).unwrap(), &np).unwrap();
    let nmap3 = propagate_noise_map(nmap4, noisy, &isp(), MapMode::SignalPath).unwrap();
    let manual = denoise_srgb(run_isp(noisy, &isp()).unwrap(), nmap3, b.srgb.as_ref().unwrap()).unwrap();
    assert_eq!(&*out.srgb.value(), &*manual.value());
}

#[test]
fn supervision_reaches_raw_net_through_isp() {
    let bundle = ModelBundle::new(ModelKind::Dual, &NetConfig::default(), Fusion::Gated, 5).unwrap();
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let t = Tape::<f64>::with_mode(crate::adcore::Mode::Train);
    let b = bundle.bind(&t, true);
    let noisy = t.constant(&random(&[1, 1, 16, 16], 0.05, 0.8, 4));
    let target = t.constant(&random(&[1, 3, 16, 16], 0.0, 1.0, 5));
    let out = forward_dual(noisy, &np, &isp(), &b).unwrap();
    reduce_mean_abs(out.srgb, target).unwrap().backward().unwrap();
    let norm: f64 = b.raw.as_ref().unwrap().tensors.iter().filter_map(|x| x.grad()).map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum();
    assert!(norm > 0.0);
}

fn count(c: usize, cfg: &NetConfig) -> usize {
    Denoiser::new("x", c, cfg, Fusion::Gated, 0).unwrap().num_params()
}

#[test]
fn dual_matches_single_domain_parameter_budget() {
    for depth in 3..=8 {
        let cfg = NetConfig { depth, ..NetConfig::default() };
        let dual = ModelBundle::new(ModelKind::Dual, &cfg, Fusion::Gated, 0).unwrap().num_params();
        for kind in [ModelKind::RawOnly, ModelKind::SrgbOnly] {
            let single = ModelBundle::new(kind, &cfg, Fusion::Gated, 0).unwrap().num_params();
            let rel = (dual as f64 - single as f64).abs() / single as f64;
            assert!(rel <= 0.05, "{cfg:?} {kind:?}: {dual} vs {single}");
        }
    }
    // Hand count for the default configuration: convs carry k²·cin·cout + cout.
    let conv = |cin: usize, cout: usize, k: usize| k * k * cin * cout + cout;
    let d = NetConfig::default();
    let hand = |c: usize, depth: usize| {
        conv(c, c, 1) + conv(2 * c, 16, 3) + conv(16, c, 3) + conv(c, 16, 3) + (depth - 1) * conv(16, 16, 3) + conv(16, c, 3)
    };
    assert_eq!(count(4, &d), hand(4, 3));
    assert_eq!(count(3, &NetConfig { depth: 6, ..d }), hand(3, 6));
}

#[test]
fn end_to_end_loss_gradcheck_on_sampled_weights() {
    let mut bundle = ModelBundle::new(ModelKind::Dual, &small(), Fusion::Gated, 11).unwrap();
    perturb(&mut bundle, 12, 0.2);
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let p = isp();
    let noisy = random(&[1, 1, 8, 8], 0.1, 0.7, 13);
    let clean_raw = random(&[1, 1, 8, 8], 0.1, 0.7, 14);
    let clean_srgb = random(&[1, 3, 8, 8], 0.0, 1.0, 15);
    let weights: Vec<Array<f64>> = bundle.nets().flat_map(|n| n.arrays::<f64>()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let coords: Vec<(usize, usize)> = (0..120)
        .map(|i| {
            let t = i % weights.len();
            (t, rng.random_range(0..weights[t].len()))
        })
        .collect();
    let r = gradcheck_inputs(
        |ws| {
            let tape = ws[0].tape();
            let b = bundle.bind_tensors(ws)?;
            let out = forward_dual(tape.constant(&noisy), &np, &p, &b)?;
            let raw_term = reduce_mean_abs(out.raw, tape.constant(&clean_raw))?;
            let srgb_term = reduce_mean_abs(out.srgb, tape.constant(&clean_srgb))?;
            raw_term.add(srgb_term)
        },
        &weights,
        Some(&coords),
        1e-6,
        Exec::Parallel,
    )
    .unwrap();
    assert!(r.max_rel_error <= 1e-3, "{r:?}");
}

#[test]
fn random_forward_passes_stay_finite() {
    let np = NoiseParams::new(0.02, 1e-3).unwrap();
    for seed in 0..100u64 {
        let mut bundle = ModelBundle::new(ModelKind::Dual, &small(), Fusion::Gated, seed).unwrap();
        perturb(&mut bundle, seed + 1000, 0.5);
        let t = Tape::<f32>::new();
        let noisy = t.constant(&random(&[1, 1, 8, 8], -0.1, 1.1, seed).map(|v| v as f32));
        let out = forward_dual(noisy, &np, &isp(), &bundle.bind(&t, false)).unwrap();
        assert!(out.raw.value().iter().chain(out.srgb.value().iter()).all(|v| v.is_finite()));
    }
}

#[test]
fn concat_fusion_and_config_checks() {
    let bundle = ModelBundle::new(ModelKind::Dual, &small(), Fusion::Concat, 1).unwrap();
    bundle.validate().unwrap();
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let t = Tape::<f64>::new();
    let noisy = t.constant(&random(&[1, 1, 8, 8], 0.1, 0.7, 1));
    let out = forward_dual(noisy, &np, &isp(), &bundle.bind(&t, false)).unwrap();
    assert_eq!(out.srgb.shape(), vec![1, 3, 8, 8]);
    assert!(NetConfig { kernel: 4, ..small() }.validate().is_err());
    assert!(NetConfig { width: 2, ..small() }.validate().is_err());
    assert!(NetConfig { depth: 0, ..small() }.validate().is_err());
}
