use super::*;
use crate::adcore::Tape;
use crate::array::Array;
use crate::diffisp::IspParams;
use crate::error::Error;
use proptest::prelude::*;

fn flat(h: usize, w: usize, v: f64) -> RawImage {
    RawImage::new(Array::filled([h, w], v), IspParams::identity()).unwrap()
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn vanishing_gain_is_noise_free() {
    let clean = RawImage::new(Array::from_fn([8, 8], |i| i as f64 / 64.0), IspParams::identity()).unwrap();
    let np = NoiseParams { k: 1e-14, sigma_r2: 0.0 };
    let noisy = synthesize_noise(&clean, &np, 3).unwrap();
    for (a, b) in noisy.plane.data().iter().zip(clean.plane.data()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn monte_carlo_moments_match_shot_plus_read() {
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let noisy = synthesize_noise(&flat(1000, 1000, 0.25), &np, 17).unwrap();
    let (mean, var) = moments(noisy.plane.data());
    assert!((mean - 0.25).abs() <= 1e-3, "mean {mean}");
    assert!((var - 0.0026).abs() / 0.0026 <= 0.02, "var {var}");
}

#[test]
fn inversion_branch_moments() {
    // R*/K = 2.5 stays on the exact inversion sampler.
    let np = NoiseParams::new(0.02, 0.0).unwrap();
    let noisy = synthesize_noise(&flat(500, 500, 0.05), &np, 5).unwrap();
    let (mean, var) = moments(noisy.plane.data());
    assert!((mean - 0.05).abs() <= 1e-3);
    assert!((var - 0.001).abs() / 0.001 <= 0.03);
    // Shot noise alone lands on the K lattice.
    for v in noisy.plane.data() {
        let k = v / 0.02;
        assert!((k - k.round()).abs() < 1e-9);
    }
}

#[test]
fn noise_is_seeded_and_unclamped() {
    let np = NoiseParams::new(0.02, 1e-3).unwrap();
    let clean = flat(16, 16, 0.01);
    let a = synthesize_noise(&clean, &np, 9).unwrap();
    let b = synthesize_noise(&clean, &np, 9).unwrap();
    let c = synthesize_noise(&clean, &np, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.plane.data().iter().any(|v| *v < 0.0));
}

#[test]
fn row_streams_do_not_depend_on_strategy() {
    let np = NoiseParams::new(0.005, 1e-4).unwrap();
    let clean: Vec<f64> = (0..24 * 10).map(|i| (i % 7) as f64 / 7.0).collect();
    let seq = synthesize_plane(&clean, 10, &np, 4, crate::exec::Exec::Sequential).unwrap();
    let par = synthesize_plane(&clean, 10, &np, 4, crate::exec::Exec::Parallel).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn nonpositive_gain_is_rejected() {
    let bad = NoiseParams { k: 0.0, sigma_r2: 1e-4 };
    assert!(matches!(synthesize_noise(&flat(2, 2, 0.5), &bad, 0), Err(Error::Parameter(_))));
    assert!(matches!(NoiseParams::new(-1.0, 0.0), Err(Error::Parameter(_))));
}

#[test]
fn sampler_without_residual_sits_on_the_mean_line() {
    let cfg = SamplerConfig { sigma_fit: 0.0, ..Default::default() };
    let expected = (2.540 * 0.002f64.ln() + 1.218).exp();
    assert!((cfg.read_variance_at(0.002) - expected).abs() <= 1e-15 * expected);
    for seed in 0..20 {
        let np = sample_noise_params(&cfg, seed).unwrap();
        let line = (2.540 * np.k.ln() + 1.218).exp();
        assert!((np.sigma_r2 - line).abs() <= 1e-12 * line);
    }
}

#[test]
fn sampler_regression_recovers_fit() {
    let cfg = SamplerConfig::default();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2024);
    let draws: Vec<NoiseParams> = (0..10_000).map(|_| sample_noise_params_with(&cfg, &mut rng).unwrap()).collect();
    let xs: Vec<f64> = draws.iter().map(|d| d.k.ln()).collect();
    let ys: Vec<f64> = draws.iter().map(|d| d.sigma_r2.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let resid_std = (resid / (n - 2.0)).sqrt();
    assert!((slope - 2.540).abs() <= 0.05, "slope {slope}");
    assert!((intercept - 1.218).abs() <= 0.05, "intercept {intercept}");
    assert!((resid_std - 0.268).abs() <= 0.02, "resid {resid_std}");
    assert!(draws.iter().all(|d| (0.0002..=0.02).contains(&d.k)));
}

#[test]
fn sampler_config_validation() {
    let bad = SamplerConfig { k_min: 0.02, k_max: 0.01, ..Default::default() };
    assert!(matches!(sample_noise_params(&bad, 0), Err(Error::Parameter(_))));
    let bad = SamplerConfig { sigma_fit: -1.0, ..Default::default() };
    assert!(bad.validate().is_err());
}

fn map_of(x: &[f64], np: &NoiseParams, form: NoiseMapForm) -> Vec<f64> {
    let t = Tape::<f64>::new();
    let v = t.constant(&Array::new(vec![x.len()], x.to_vec()).unwrap());
    noise_map_variants(v, np, form).unwrap().value().to_vec()
}

#[test]
fn noise_map_values() {
    let np = NoiseParams { k: 0.01, sigma_r2: 1e-4 };
    let s = map_of(&[0.25], &np, NoiseMapForm::Std)[0];
    assert!((s - 0.050_990_195_135_927_85).abs() < 1e-15);
    let v = map_of(&[0.25], &np, NoiseMapForm::Variance)[0];
    assert!((v - 0.0026).abs() < 1e-15);
    let zero = NoiseParams { k: 0.0, sigma_r2: 0.0 };
    assert!(map_of(&[0.0, 0.3, 1.0], &zero, NoiseMapForm::Std).iter().all(|v| *v == 0.0));
    assert_eq!(map_of(&[0.0], &np, NoiseMapForm::Std)[0], 0.01);
    // Negative estimates are clamped before the square root.
    assert_eq!(map_of(&[-0.5], &np, NoiseMapForm::Std)[0], 0.01);
}

#[test]
fn normalized_and_disabled_forms() {
    let np = NoiseParams { k: 0.01, sigma_r2: 1e-4 };
    let m = map_of(&[0.1, 0.7, 0.3], &np, NoiseMapForm::Normalized);
    assert_eq!(m.iter().cloned().fold(0.0, f64::max), 1.0);
    let zero = NoiseParams { k: 0.0, sigma_r2: 0.0 };
    assert!(map_of(&[0.1, 0.7], &zero, NoiseMapForm::Normalized).iter().all(|v| *v == 0.0));
    assert!(map_of(&[0.1, 0.7], &np, NoiseMapForm::Disabled).iter().all(|v| *v == 0.0));
    assert_eq!(NoiseMapForm::default(), NoiseMapForm::Std);
    assert_eq!(serde_json::to_string(&NoiseMapForm::Disabled).unwrap(), "\"none\"");
}

#[test]
fn noise_map_gradient() {
    let np = NoiseParams { k: 0.01, sigma_r2: 1e-4 };
    let x = Array::new(vec![4], vec![0.1, 0.25, 0.5, 0.9]).unwrap();
    let err = crate::adcore::gradcheck(|x| Ok(noise_map(x, &np)?.sum()), &x, 1e-6).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn pack_order_and_shapes() {
    let t = Tape::<f64>::new();
    let raw = RawImage::new(Array::new([2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap(), IspParams::identity()).unwrap();
    let p = pack_bayer(&raw, &t).unwrap();
    assert_eq!(p.shape(), vec![1, 4, 1, 1]);
    assert_eq!(&*p.value(), &[0.1, 0.2, 0.3, 0.4]);

    let big = flat(256, 256, 0.5);
    assert_eq!(pack_bayer(&big, &t).unwrap().shape(), vec![1, 4, 128, 128]);

    let mut grbg = raw.clone();
    grbg.params.bayer = Bayer::Grbg;
    assert!(matches!(pack_bayer(&grbg, &t), Err(Error::Layout(_))));
    assert!(matches!(pack_bayer(&flat(3, 4, 0.0), &t), Err(Error::Dimension(_))));
}

#[test]
fn bayer_site_colours() {
    assert_eq!(Bayer::Rggb.color_at(0, 0), 0);
    assert_eq!(Bayer::Rggb.color_at(1, 1), 2);
    assert_eq!(Bayer::Grbg.color_at(0, 1), 0);
    assert_eq!(Bayer::Gbrg.color_at(1, 0), 0);
    assert_eq!(Bayer::Bggr.color_at(0, 0), 2);
    for b in Bayer::ALL {
        assert_eq!(b.to_string().parse::<Bayer>().unwrap(), b);
        let (ry, rx) = b.red_offset();
        assert_eq!(b.color_at(ry, rx), 0);
    }
    assert!(matches!("XYZW".parse::<Bayer>(), Err(Error::Layout(_))));
}

proptest! {
    #[test]
    fn pack_unpack_bit_exact(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let mut s = seed;
        let data: Vec<f64> = (0..4 * h * w).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); (s >> 11) as f64 / (1u64 << 53) as f64 }).collect();
        let raw = RawImage::new(Array::new([2 * h, 2 * w], data.clone()).unwrap(), IspParams::identity()).unwrap();
        let t = Tape::<f64>::new();
        let back = unpack(pack_bayer(&raw, &t).unwrap()).unwrap();
        prop_assert_eq!(&*back.value(), &data);
    }

    #[test]
    fn noise_map_monotone(x in 0.0f64..1.0, dx in 0.0f64..0.5, k in 1e-4f64..0.05, dk in 0.0f64..0.05, s in 0.0f64..1e-2, ds in 0.0f64..1e-2) {
        let base = NoiseParams { k, sigma_r2: s };
        let m = |x: f64, np: &NoiseParams| map_of(&[x], np, NoiseMapForm::Std)[0];
        let v = m(x, &base);
        prop_assert!(m(x + dx, &base) >= v);
        let more_gain = NoiseParams { k: k + dk, sigma_r2: s };
        let more_read = NoiseParams { k, sigma_r2: s + ds };
        prop_assert!(m(x, &more_gain) >= v);
        prop_assert!(m(x, &more_read) >= v);
    }
}
