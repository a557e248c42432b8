use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dualdn_core::dataio::{crop_rggb, procedural_raw};
use dualdn_core::eval::{evaluate, EvalSettings};
use dualdn_core::gradsuite::run_stage;
use dualdn_core::nets::{Fusion, ModelBundle, ModelKind, NetConfig};
use dualdn_core::rawmodel::{synthesize_plane, NoiseParams, RawImage, SamplerConfig};
use dualdn_core::train::{train_step, OptimizerState, TrainConfig};
use dualdn_core::Exec;
use std::hint::black_box;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn scenes(n: usize, size: usize) -> Vec<RawImage> {
    (0..n)
        .map(|i| crop_rggb(&procedural_raw(size + 2, i as u64).unwrap(), 0, 0, size).unwrap())
        .collect()
}

fn bench_train_step(c: &mut Criterion) {
    let data = scenes(8, 96);
    let cfg = TrainConfig::desk();
    let sampler = SamplerConfig::default();
    let mut g = c.benchmark_group("train_step");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            let mut bundle = ModelBundle::new(ModelKind::Dual, &NetConfig::default(), Fusion::Gated, 0).unwrap();
            let mut state = OptimizerState::new(bundle.params().map(|p| p.value.len()));
            let mut iter = 0;
            b.iter(|| {
                iter += 1;
                black_box(train_step(&mut bundle, &mut state, &data, &sampler, &cfg, iter, exec).unwrap())
            })
        });
    }
    g.finish();
}

fn bench_noise(c: &mut Criterion) {
    let (h, w) = (512, 512);
    let clean: Vec<f64> = (0..h * w).map(|i| (i % w) as f64 / w as f64).collect();
    let np = NoiseParams::new(0.01, 1e-4).unwrap();
    let mut g = c.benchmark_group("synthesize_noise_512");
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(synthesize_plane(&clean, w, &np, 7, exec).unwrap()))
        });
    }
    g.finish();
}

fn bench_eval(c: &mut Criterion) {
    let test = scenes(4, 128);
    let bundle = ModelBundle::new(ModelKind::Dual, &NetConfig::default(), Fusion::Gated, 0).unwrap();
    let mut g = c.benchmark_group("evaluate_4x128");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                black_box(
                    evaluate(&test, &[("dual", &bundle)], &SamplerConfig::default(), &EvalSettings::default(), exec).unwrap(),
                )
            })
        });
    }
    g.finish();
}

fn bench_gradcheck(c: &mut Criterion) {
    let mut g = c.benchmark_group("gradcheck_loss");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_stage("loss", 0, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_train_step, bench_noise, bench_eval, bench_gradcheck);
criterion_main!(benches);
