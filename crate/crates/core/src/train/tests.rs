use super::*;
use crate::adcore::Tape;
use crate::array::Array;
use crate::dataio::{crop_rggb, generate_dataset, procedural_raw, DataConfig, ExperimentConfig, GenConfig, IspOverrides, OutputConfig};
use crate::error::Error;
use crate::exec::Exec;
use crate::nets::{ModelBundle, ModelKind, NetConfig};
use crate::rawmodel::{pack, RawImage, SamplerConfig};
use proptest::prelude::*;

#[test]
fn lr_schedule_examples() {
    let paper = TrainConfig::paper();
    assert_eq!(lr_at(0, &paper), 1e-5);
    assert_eq!(lr_at(39_999, &paper), 1e-5);
    let expected = 1e-5 * 0.6 * 0.6 * 0.6 * 0.6;
    assert!((lr_at(100_000, &paper) - expected).abs() < 1e-20);
    assert!((lr_at(100_000, &paper) - 1.296e-6).abs() < 1e-18);
    assert!((lr_at(40_000, &paper) - 6e-6).abs() < 1e-18);
    let desk = TrainConfig::desk();
    assert_eq!(lr_at(999, &desk), 1e-3);
    assert!((lr_at(1500, &desk) - 3.6e-4).abs() < 1e-15);
}

#[test]
fn profiles_and_validation() {
    let d = TrainConfig::desk();
    assert_eq!((d.patch, d.batch, d.iters, d.milestones.clone()), (64, 4, 2000, vec![1000, 1500]));
    let p = TrainConfig::paper();
    assert_eq!((p.patch, p.batch, p.iters, p.betas, p.weight_decay), (256, 2, 120_000, (0.9, 0.999), 1e-2));
    assert!(d.validate().is_ok() && p.validate().is_ok());
    let bad = [
        TrainConfig { patch: 63, ..d.clone() },
        TrainConfig { milestones: vec![1500, 1000], ..d.clone() },
        TrainConfig { milestones: vec![1000, 1000], ..d.clone() },
        TrainConfig { milestones: vec![2000], ..d.clone() },
        TrainConfig { decay: 1.0, ..d.clone() },
        TrainConfig { alpha_range: [0.5, 1.5], ..d.clone() },
        TrainConfig { k_range: [0.0, 0.02], ..d.clone() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))), "{cfg:?}");
    }
    let js = serde_json::to_string(&d).unwrap();
    assert_eq!(serde_json::from_str::<TrainConfig>(&js).unwrap(), d);
    let partial: TrainConfig = serde_json::from_str(r#"{"iters": 10, "milestones": [5]}"#).unwrap();
    assert_eq!((partial.iters, partial.patch), (10, 64));
}

fn scalar(v: f64) -> Array<f64> {
    Array::new(vec![1], vec![v]).unwrap()
}

#[test]
fn adamw_examples() {
    let mut p = vec![Array::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
    let zeros = vec![Array::zeros(vec![3])];
    let mut st = OptimizerState::new([3]);
    adamw_step(p.iter_mut(), &zeros, &mut st, 0.1, (0.9, 0.999), 0.0).unwrap();
    assert_eq!(p[0].data(), &[1.0, -2.0, 0.5]);

    // f(θ) = θ²/2 at θ = 1: gradient 1, so both bias-corrected moments are 1.
    let mut th = vec![scalar(1.0)];
    let mut st = OptimizerState::new([1]);
    adamw_step(th.iter_mut(), &[scalar(1.0)], &mut st, 0.1, (0.9, 0.999), 0.0).unwrap();
    assert!((th[0].data()[0] - (1.0 - 0.1 / (1.0 + ADAM_EPS))).abs() < 1e-15);
    assert_eq!(st.step, 1);

    let mut th = vec![scalar(2.0)];
    let mut st = OptimizerState::new([1]);
    adamw_step(th.iter_mut(), &[scalar(0.0)], &mut st, 0.1, (0.9, 0.999), 0.01).unwrap();
    assert!((th[0].data()[0] - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
}

/// Textbook Adam on f(θ) = Σ c·θ²/2. Weight decay either joins the
/// gradient (`coupled`) or shrinks θ beside the Adam update.
fn reference_adam(theta0: &[f64], c: &[f64], steps: usize, lr: f64, wd: f64, coupled: bool) -> Vec<f64> {
    let (b1, b2): (f64, f64) = (0.9, 0.999);
    let mut th = theta0.to_vec();
    let mut m = vec![0.0; th.len()];
    let mut v = vec![0.0; th.len()];
    for t in 1..=steps {
        for i in 0..th.len() {
            let g = c[i] * th[i] + if coupled { wd * th[i] } else { 0.0 };
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - b1.powi(t as i32));
            let vh = v[i] / (1.0 - b2.powi(t as i32));
            let decay = if coupled { 1.0 } else { 1.0 - lr * wd };
            th[i] = th[i] * decay - lr * mh / (vh.sqrt() + 1e-8);
        }
    }
    th
}

fn run_adamw(theta0: &[f64], c: &[f64], steps: usize, lr: f64, wd: f64) -> Vec<f64> {
    let mut p = vec![Array::new(vec![theta0.len()], theta0.to_vec()).unwrap()];
    let mut st = OptimizerState::new([theta0.len()]);
    for _ in 0..steps {
        let g = Array::new(vec![c.len()], p[0].data().iter().zip(c).map(|(t, c)| c * t).collect()).unwrap();
        adamw_step(p.iter_mut(), &[g], &mut st, lr, (0.9, 0.999), wd).unwrap();
    }
    p[0].data().to_vec()
}

#[test]
fn adamw_without_decay_is_adam() {
    let th0 = [1.0, -0.7, 3.0, 0.01];
    let c = [1.0, 4.0, 0.25, 10.0];
    let ours = run_adamw(&th0, &c, 50, 0.05, 0.0);
    let adam = reference_adam(&th0, &c, 50, 0.05, 0.0, false);
    for (a, b) in ours.iter().zip(&adam) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn weight_decay_is_decoupled() {
    let th0 = [1.0, -0.7, 3.0];
    let c = [1.0, 4.0, 0.25];
    let (lr, wd) = (0.05, 0.1);
    let ours = run_adamw(&th0, &c, 30, lr, wd);
    let decoupled = reference_adam(&th0, &c, 30, lr, wd, false);
    for (a, b) in ours.iter().zip(&decoupled) {
        assert!((a - b).abs() <= 1e-12);
    }
    let coupled = reference_adam(&th0, &c, 30, lr, wd, true);
    assert!(ours.iter().zip(&coupled).any(|(a, b)| (a - b).abs() > 1e-4));
}

#[test]
fn non_finite_gradient_aborts_without_touching_state() {
    let mut p = vec![scalar(1.0), scalar(2.0)];
    let mut st = OptimizerState::new([1, 1]);
    let g = [scalar(0.5), scalar(f64::NAN)];
    let err = adamw_step(p.iter_mut(), &g, &mut st, 0.1, (0.9, 0.999), 0.0).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    assert_eq!((p[0].data()[0], p[1].data()[0], st.step), (1.0, 2.0, 0));
    assert_eq!(st.m[0][0], 0.0);
    let bad = [Array::zeros(vec![2]), scalar(0.0)];
    assert!(matches!(adamw_step(p.iter_mut(), &bad, &mut st, 0.1, (0.9, 0.999), 0.0), Err(Error::Dimension(_))));
}

fn t4(tape: &Tape<f64>, v: Vec<f64>) -> crate::adcore::Tensor<'_, f64> {
    let n = v.len();
    tape.constant_vec([1, 1, 1, n], v).unwrap()
}

#[test]
fn dual_loss_examples() {
    let tape = Tape::<f64>::new();
    let a = t4(&tape, vec![0.1, 0.5, 0.9]);
    let z = dual_loss(a, a, a, a, 1.0).unwrap();
    assert_eq!(z.loss.item().unwrap(), 0.0);

    let r = t4(&tape, vec![0.0, 0.0]);
    let r1 = t4(&tape, vec![0.1, -0.1]);
    let s = t4(&tape, vec![0.5, 0.5]);
    let s1 = t4(&tape, vec![0.7, 0.3]);
    let t = dual_loss(r1, r, s1, s, 1.0).unwrap();
    assert!((t.raw.item().unwrap() - 0.1).abs() < 1e-15);
    assert!((t.srgb.item().unwrap() - 0.2).abs() < 1e-15);
    assert!((t.loss.item().unwrap() - 0.3).abs() < 1e-15);
}

#[test]
fn zero_lambda_is_srgb_only_supervision() {
    let tape = Tape::<f64>::new();
    let raw = tape.param(&Array::new(vec![1, 1, 1, 2], vec![0.3, 0.2]).unwrap());
    let raw_clean = t4(&tape, vec![0.0, 0.0]);
    let s = tape.param(&Array::new(vec![1, 1, 1, 2], vec![0.6, 0.1]).unwrap());
    let s_clean = t4(&tape, vec![0.5, 0.5]);
    let t = dual_loss(raw, raw_clean, s, s_clean, 0.0).unwrap();
    assert_eq!(t.loss.item().unwrap(), t.srgb.item().unwrap());
    tape.backward(t.loss).unwrap();
    assert!(raw.grad().map_or(true, |g| g.data().iter().all(|v| *v == 0.0)));
    assert!(s.grad().unwrap().data().iter().any(|v| *v != 0.0));
}

/// Mosaic whose value at each site is its colour code: R 0, G 1, B 2.
fn colour_coded(h: usize, w: usize) -> Array<f64> {
    Array::from_fn([h, w], |i| crate::rawmodel::Bayer::Rggb.color_at(i / w, i % w) as f64)
}

#[test]
fn flips_preserve_phase_and_invert() {
    let coded = colour_coded(8, 12);
    let numbered = Array::from_fn([8, 12], |i| i as f64);
    for (h, v) in [(true, false), (false, true), (true, true), (false, false)] {
        let f = Flip { horizontal: h, vertical: v };
        let once = flip_mosaic(&coded, f).unwrap();
        assert_eq!(once, coded);
        let twice = flip_mosaic(&flip_mosaic(&numbered, f).unwrap(), f).unwrap();
        assert_eq!(twice, numbered);
        let mut perm: Vec<f64> = flip_mosaic(&numbered, f).unwrap().into_data();
        perm.sort_by(f64::total_cmp);
        assert_eq!(perm, numbered.data());
    }
    let tape = Tape::<f64>::new();
    let flipped = flip_mosaic(&coded, Flip { horizontal: true, vertical: true }).unwrap();
    let packed = pack(tape.constant(&flipped.reshape([1, 1, 8, 12]).unwrap())).unwrap();
    let v = packed.value();
    for (c, want) in [0.0, 1.0, 1.0, 2.0].iter().enumerate() {
        assert!(v[c * 24..(c + 1) * 24].iter().all(|x| x == want));
    }
    // Horizontal flip moves tile column 0 to the last tile column.
    let f = flip_mosaic(&numbered, Flip { horizontal: true, vertical: false }).unwrap();
    assert_eq!(&f.data()[..4], &[10.0, 11.0, 8.0, 9.0]);
    assert!(flip_mosaic(&Array::<f64>::zeros(vec![3, 4]), f_h()).is_err());
}

fn f_h() -> Flip {
    Flip { horizontal: true, vertical: false }
}

#[test]
fn augment_is_seeded_and_rggb_only() {
    let raw = RawImage::new(Array::from_fn([8, 8], |i| i as f64 / 64.0), Default::default()).unwrap();
    assert_eq!(augment(&raw, 3).unwrap(), augment(&raw, 3).unwrap());
    let flips: std::collections::HashSet<(bool, bool)> =
        (0..64).map(|s| Flip::from_seed(s)).map(|f| (f.horizontal, f.vertical)).collect();
    assert_eq!(flips.len(), 4);
    let mut grbg = raw.clone();
    grbg.params.bayer = crate::rawmodel::Bayer::Grbg;
    assert!(matches!(augment(&grbg, 0), Err(Error::Layout(_))));
}

fn tiny_net() -> NetConfig {
    NetConfig { depth: 2, width: 8, ..NetConfig::default() }
}

fn tiny_cfg(iters: usize) -> TrainConfig {
    TrainConfig {
        iters,
        batch: 2,
        patch: 16,
        milestones: vec![],
        checkpoint_every: 0,
        ..TrainConfig::desk()
    }
}

/// RGGB scenes of exactly `size`×`size`.
fn scenes(n: usize, size: usize) -> Vec<RawImage> {
    (0..n)
        .map(|i| crop_rggb(&procedural_raw(size + 2, 40 + i as u64).unwrap(), 0, 0, size).unwrap())
        .collect()
}

#[test]
fn zero_alpha_range_draws_identity_curve() {
    let cfg = TrainConfig { alpha_range: [0.0, 0.0], ..tiny_cfg(4) };
    let data = scenes(2, 32);
    for b in 0..4 {
        let d = draw_sample(&cfg, &SamplerConfig::default(), &data, 1, b).unwrap();
        assert_eq!(d.alpha, 0.0);
        assert!((0.0002..=0.02).contains(&d.noise.k));
    }
    let a = draw_sample(&cfg, &SamplerConfig::default(), &data, 7, 1).unwrap();
    assert_eq!(a, draw_sample(&cfg, &SamplerConfig::default(), &data, 7, 1).unwrap());
    assert_ne!(a, draw_sample(&cfg, &SamplerConfig::default(), &data, 8, 1).unwrap());
}

#[test]
fn supervision_reaches_the_raw_net() {
    let cfg = tiny_cfg(1);
    let data = scenes(2, 32);
    let bundle = ModelBundle::new(ModelKind::Dual, &tiny_net(), cfg.fusion, 5).unwrap();
    let d = draw_sample(&cfg, &SamplerConfig::default(), &data, 0, 0).unwrap();
    let g = sample_gradients(&bundle, &data, &d, &cfg).unwrap();
    let nraw = bundle.raw.as_ref().unwrap().params.len();
    let norm = |gs: &[Array<f32>]| gs.iter().flat_map(|g| g.data()).map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    assert!(norm(&g.grads[..nraw]) > 0.0);
    assert!(norm(&g.grads[nraw..]) > 0.0);
    // With λ = 0 the raw net still learns, through the ISP alone.
    let g0 = sample_gradients(&bundle, &data, &d, &TrainConfig { lambda_raw: 0.0, ..cfg }).unwrap();
    assert!(norm(&g0.grads[..nraw]) > 0.0);
}

#[test]
fn training_is_deterministic_across_strategies() {
    let cfg = tiny_cfg(3);
    let data = scenes(3, 32);
    let run = |exec| {
        let opts = RunOptions { exec, ..Default::default() };
        train(&tiny_net(), &data, &cfg, &SamplerConfig::default(), &opts).unwrap()
    };
    let a = run(Exec::Parallel);
    let b = run(Exec::Parallel);
    let c = run(Exec::Sequential);
    assert_eq!(a.log, b.log);
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.log, c.log);
    assert_eq!(a.bundle, c.bundle);
    assert_eq!(a.state.step, 3);
}

#[test]
fn loss_decreases_on_a_fixed_patch_set() {
    let data = scenes(8, 32);
    let mut gains = Vec::new();
    for seed in 0..3 {
        let cfg = TrainConfig { seed, patch: 32, lr0: 2e-3, ..tiny_cfg(200) };
        let out = train(&tiny_net(), &data, &cfg, &SamplerConfig::default(), &RunOptions::default()).unwrap();
        let mean = |r: &[StepLog]| r.iter().map(|s| s.loss).sum::<f64>() / r.len() as f64;
        gains.push(mean(&out.log[..40]) - mean(&out.log[160..]));
    }
    gains.sort_by(f64::total_cmp);
    assert!(gains[1] > 0.0, "{gains:?}");
}

#[test]
fn resume_continues_bit_identically() {
    let data = scenes(2, 32);
    let dir = tempfile::tempdir().unwrap();
    let (full, part) = (dir.path().join("full"), dir.path().join("part"));
    let opts = |d: &std::path::Path, resume| RunOptions { out_dir: Some(d.to_path_buf()), resume, ..Default::default() };
    let cfg = TrainConfig { checkpoint_every: 2, ..tiny_cfg(5) };
    let a = train(&tiny_net(), &data, &cfg, &SamplerConfig::default(), &opts(&full, false)).unwrap();
    assert!(full.join("ckpt_000002.wbin").is_file() && full.join("ckpt_000004_opt.bin").is_file());
    assert!(full.join("final.wbin").is_file());

    train(&tiny_net(), &data, &TrainConfig { iters: 3, ..cfg.clone() }, &SamplerConfig::default(), &opts(&part, false))
        .unwrap();
    let b = train(&tiny_net(), &data, &cfg, &SamplerConfig::default(), &opts(&part, true)).unwrap();
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.log, b.log);
    assert_eq!(
        std::fs::read(full.join(LOG_FILE)).unwrap(),
        std::fs::read(part.join(LOG_FILE)).unwrap()
    );
    let logged = read_log(&full.join(LOG_FILE)).unwrap();
    assert_eq!(logged, a.log);
    assert_eq!(logged.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    let ck = load_checkpoint(&latest_checkpoint(&full).unwrap().unwrap()).unwrap();
    assert_eq!((ck.iter, &ck.bundle), (5, &a.bundle));
    assert_eq!(ck.state, a.state);
}

#[test]
fn divergence_aborts_with_a_state_dump() {
    let huge = RawImage::new(Array::filled([16, 16], 1e38), Default::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let err = train(&tiny_net(), &[huge], &tiny_cfg(2), &SamplerConfig::default(), &opts).unwrap_err();
    match err {
        Error::NonFinite(m) => assert!(m.contains("iteration 0") && m.contains("dumped"), "{m}"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(dir.path().join("abort").join("ckpt_000000.wbin").is_file());
}

#[test]
fn experiments_refuse_overlapping_splits_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = DataConfig {
        train_manifest: dir.path().join("train.json"),
        test_manifest: dir.path().join("test.json"),
        gen: GenConfig { train_count: 2, test_count: 1, size: 20, seed: 9 },
    };
    let (train_set, _) = generate_dataset(&dir.path().join("scenes"), &data, Exec::Sequential).unwrap();
    let mut exp = ExperimentConfig {
        schema_version: 1,
        train: tiny_cfg(2),
        sampler: SamplerConfig::default(),
        isp: IspOverrides { gamma: Some(false), ..Default::default() },
        net: tiny_net(),
        data: data.clone(),
        outputs: OutputConfig { out_dir: Some(dir.path().join("run")), eval_csv: None },
    };
    let out = train_experiment(&exp, &RunOptions::default()).unwrap();
    assert_eq!(out.log.len(), 2);
    assert!(dir.path().join("run").join(LOG_FILE).is_file());

    train_set.save(&dir.path().join("leaky.json")).unwrap();
    exp.data.test_manifest = dir.path().join("leaky.json");
    exp.outputs.out_dir = Some(dir.path().join("leaky_run"));
    assert!(matches!(train_experiment(&exp, &RunOptions::default()), Err(Error::Data(_))));
    assert!(!dir.path().join("leaky_run").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lr_never_increases(a in 0usize..130_000, b in 0usize..130_000) {
        let cfg = TrainConfig::paper();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(lr_at(hi, &cfg) <= lr_at(lo, &cfg));
    }

    #[test]
    fn dual_loss_is_nonnegative_and_zero_only_on_equality(
        r in proptest::collection::vec(-1.0f64..1.0, 4),
        s in proptest::collection::vec(-1.0f64..1.0, 4),
        dr in proptest::collection::vec(-0.5f64..0.5, 4),
        lambda in 0.01f64..2.0,
    ) {
        let tape = Tape::<f64>::new();
        let a = t4(&tape, r.clone());
        let b = t4(&tape, r.iter().zip(&dr).map(|(x, d)| x + d).collect());
        let c = t4(&tape, s);
        let l = dual_loss(a, b, c, c, lambda).unwrap().loss.item().unwrap();
        prop_assert!(l >= 0.0);
        let equal = dr.iter().all(|d| *d == 0.0);
        prop_assert_eq!(l == 0.0, equal);
        prop_assert_eq!(dual_loss(a, a, c, c, lambda).unwrap().loss.item().unwrap(), 0.0);
    }
}
