//! Finite-difference suite over every differentiable stage: engine ops,
//! each ISP stage, noise maps, each network block and the full loss.
//!
//! Vector-valued stages are reduced with a fixed random projection so every
//! output element contributes to the checked gradient.

use crate::adcore::{concat_channels, gradcheck_inputs, reduce_mean_abs, GradCheckReport, Tensor, DEFAULT_EPS};
use crate::array::Array;
use crate::diffisp::{
    color_correct, demosaic, gamma_encode, global_tonemap_tensor, propagate_noise_map, run_isp, white_balance,
    DemosaicKind, IspParams, MapMode, TONE_ITERS,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nets::{denoise_srgb, forward_dual, nfb_fuse, Activation, Fusion, ModelBundle, ModelKind, NetConfig};
use crate::rawmodel::{noise_map, NoiseParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

pub const STAGES: &[&str] = &[
    "ops",
    "white_balance",
    "demosaic",
    "ccm",
    "tonemap",
    "gamma",
    "isp",
    "noise_map",
    "propagate",
    "nfb",
    "raw_net",
    "srgb_net",
    "loss",
];

/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const FD_EPS: f64 = DEFAULT_EPS;
/// Coordinates probed per input tensor.
const PROBES: usize = 48;

#[derive(Clone, Debug)]
pub struct StageResult {
    pub stage: String,
    pub seed: u64,
    pub report: GradCheckReport,
    pub elapsed: Duration,
}

impl StageResult {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= TOLERANCE
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array<f64> {
    Array::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// `Σ w ⊙ y` with `w` fixed by `seed` and `y`'s shape.
fn project<'t>(y: Tensor<'t, f64>, seed: u64) -> Result<Tensor<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d0e_c7ed);
    let w = y.tape().constant(&uniform(&y.shape(), -1.0, 1.0, &mut rng));
    Ok(y.mul(w)?.sum())
}

fn probes(inputs: &[Array<f64>], rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    inputs
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            let n = a.len();
            if n <= PROBES {
                (0..n).map(|j| (i, j)).collect::<Vec<_>>()
            } else {
                (0..PROBES).map(|_| (i, rng.random_range(0..n))).collect()
            }
        })
        .collect()
}

fn check<F>(f: F, inputs: Vec<Array<f64>>, rng: &mut ChaCha8Rng, exec: Exec) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&[Tensor<'t, f64>]) -> Result<Tensor<'t, f64>> + Sync,
{
    let coords = probes(&inputs, rng);
    gradcheck_inputs(f, &inputs, Some(&coords), FD_EPS, exec)
}

fn camera(rng: &mut ChaCha8Rng) -> IspParams {
    let a = rng.random_range(0.05..0.2);
    let b = rng.random_range(0.0..0.1);
    IspParams {
        wb_gains: [rng.random_range(1.0..2.0), 1.0, rng.random_range(1.0..2.0)],
        ccm: [1.0 + a + b, -a, -b, -b, 1.0 + a + b, -a, -a, -b, 1.0 + a + b],
        alpha_tm: rng.random_range(0.0..1.0),
        ..IspParams::identity()
    }
}

fn noise(rng: &mut ChaCha8Rng) -> Result<NoiseParams> {
    NoiseParams::new(rng.random_range(0.001..0.02), rng.random_range(1e-5..1e-3))
}

fn perturbed(kind: ModelKind, cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Result<ModelBundle> {
    let mut b = ModelBundle::new(kind, cfg, Fusion::Gated, rng.random())?;
    for p in b.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.2f32..0.2));
    }
    Ok(b)
}

fn weights(b: &ModelBundle) -> Vec<Array<f64>> {
    b.nets().flat_map(|n| n.arrays::<f64>()).collect()
}

const NET: NetConfig = NetConfig {
    depth: 2,
    width: 6,
    kernel: 3,
    activation: Activation::Leaky,
};

/// Max relative error of one stage at one seed.
pub fn run_stage(stage: &str, seed: u64, exec: Exec) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    match stage {
        "ops" => {
            let x = uniform(&[1, 2, 6, 6], 0.1, 1.0, r);
            let w = uniform(&[3, 2, 3, 3], -0.5, 0.5, r);
            let b = uniform(&[3], -0.2, 0.2, r);
            check(
                |t| {
                    let conv = t[0].conv2d(t[1], Some(t[2]), 1, 1)?.sigmoid()?;
                    let strided = t[0].conv2d(t[1], None, 2, 1)?.exp()?;
                    let shuffled = t[0].pixel_unshuffle(2)?.ln()?.pixel_shuffle(2)?;
                    let both = concat_channels(&[shuffled, t[0].sqrt()?.div(t[0].add_scalar(1.0)?)?])?;
                    let p1 = project(conv, seed)?;
                    let p2 = project(strided, seed + 1)?;
                    p1.add(p2)?.add(project(both, seed + 2)?)
                },
                vec![x, w, b],
                r,
                exec,
            )
        }
        "white_balance" => {
            let p = camera(r);
            check(|t| project(white_balance(t[0], &p)?, seed), vec![uniform(&[1, 4, 4, 4], 0.05, 0.45, r)], r, exec)
        }
        "demosaic" => {
            let x = uniform(&[1, 1, 12, 12], 0.0, 1.0, r);
            let mut worst = GradCheckReport { max_rel_error: 0.0, worst: None, worst_values: (0.0, 0.0), checked: 0 };
            for kind in [DemosaicKind::Bilinear, DemosaicKind::GradientCorrected] {
                let p = IspParams { demosaic: kind, ..IspParams::identity() };
                let rep = check(|t| project(demosaic(t[0], &p)?, seed), vec![x.clone()], r, exec)?;
                worst.checked += rep.checked;
                if rep.max_rel_error >= worst.max_rel_error {
                    worst.max_rel_error = rep.max_rel_error;
                    worst.worst = rep.worst;
                    worst.worst_values = rep.worst_values;
                }
            }
            Ok(worst)
        }
        "ccm" => {
            let p = camera(r);
            check(|t| project(color_correct(t[0], &p)?, seed), vec![uniform(&[1, 3, 5, 5], 0.3, 0.7, r)], r, exec)
        }
        "tonemap" => {
            let x = uniform(&[1, 3, 5, 5], 0.0, 1.0, r);
            let a = uniform(&[1], 0.1, 0.9, r);
            check(|t| project(global_tonemap_tensor(t[0], t[1], TONE_ITERS)?, seed), vec![x, a], r, exec)
        }
        "gamma" => check(|t| project(gamma_encode(t[0])?, seed), vec![uniform(&[1, 3, 5, 5], 0.01, 1.0, r)], r, exec),
        "isp" => {
            let p = camera(r);
            check(|t| project(run_isp(t[0], &p)?, seed), vec![uniform(&[1, 1, 12, 12], 0.05, 0.45, r)], r, exec)
        }
        "noise_map" => {
            let np = noise(r)?;
            check(|t| project(noise_map(t[0], &np)?, seed), vec![uniform(&[1, 4, 4, 4], 0.02, 1.0, r)], r, exec)
        }
        "propagate" => {
            let p = camera(r);
            let m = uniform(&[1, 4, 6, 6], 0.01, 0.1, r);
            let x = uniform(&[1, 1, 12, 12], 0.05, 0.45, r);
            // The accompanying image only supplies constant slopes.
            check(
                |t| {
                    let img = t[0].tape().constant(&x);
                    let a = propagate_noise_map(t[0], img, &p, MapMode::SignalPath)?;
                    let b = propagate_noise_map(t[0], img, &p, MapMode::Linearized)?;
                    project(a, seed)?.add(project(b, seed + 1)?)
                },
                vec![m],
                r,
                exec,
            )
        }
        "nfb" => {
            let b = perturbed(ModelKind::Dual, &NET, r)?;
            let mut inputs = vec![uniform(&[1, 4, 5, 5], 0.0, 1.0, r), uniform(&[1, 4, 5, 5], 0.0, 0.1, r)];
            inputs.extend(weights(&b).into_iter().take(6));
            check(|t| project(nfb_fuse(t[0], t[1], &t[2..8], Activation::Leaky)?, seed), inputs, r, exec)
        }
        "raw_net" | "srgb_net" => {
            let raw = stage == "raw_net";
            let b = perturbed(if raw { ModelKind::RawOnly } else { ModelKind::SrgbOnly }, &NET, r)?;
            let c = if raw { 4 } else { 3 };
            let mut inputs = vec![uniform(&[1, c, 6, 6], 0.2, 0.8, r), uniform(&[1, c, 6, 6], 0.0, 0.1, r)];
            inputs.extend(weights(&b));
            check(
                |t| {
                    let bound = b.bind_tensors(&t[2..])?;
                    let y = if raw {
                        bound.raw.as_ref().expect("raw net").forward(t[0], t[1])?
                    } else {
                        denoise_srgb(t[0], t[1], bound.srgb.as_ref().expect("srgb net"))?
                    };
                    project(y, seed)
                },
                inputs,
                r,
                exec,
            )
        }
        "loss" => {
            let b = perturbed(ModelKind::Dual, &NET, r)?;
            let p = camera(r);
            let np = noise(r)?;
            let clean_raw = uniform(&[1, 1, 12, 12], 0.05, 0.45, r);
            let clean_srgb = uniform(&[1, 3, 12, 12], 0.0, 1.0, r);
            let lambda = r.random_range(0.0..2.0);
            let mut inputs = vec![uniform(&[1, 1, 12, 12], 0.05, 0.45, r)];
            inputs.extend(weights(&b));
            check(
                |t| {
                    let tape = t[0].tape();
                    let bound = b.bind_tensors(&t[1..])?;
                    let out = forward_dual(t[0], &np, &p, &bound)?;
                    let raw_term = reduce_mean_abs(out.raw, tape.constant(&clean_raw))?;
                    let srgb_term = reduce_mean_abs(out.srgb, tape.constant(&clean_srgb))?;
                    raw_term.mul_scalar(lambda)?.add(srgb_term)
                },
                inputs,
                r,
                exec,
            )
        }
        other => Err(Error::Parameter(format!(
            "unknown gradcheck stage {other:?}; expected one of {} or all",
            STAGES.join(", ")
        ))),
    }
}

/// Runs `stage` (or every stage for `"all"`) at each seed.
pub fn run_suite(stage: &str, seeds: &[u64], exec: Exec) -> Result<Vec<StageResult>> {
    let names: Vec<&str> = if stage == "all" { STAGES.to_vec() } else { vec![stage] };
    let mut out = Vec::new();
    for name in names {
        for &seed in seeds {
            let start = Instant::now();
            let report = run_stage(name, seed, exec)?;
            out.push(StageResult {
                stage: name.to_string(),
                seed,
                report,
                elapsed: start.elapsed(),
            });
        }
    }
    Ok(out)
}
