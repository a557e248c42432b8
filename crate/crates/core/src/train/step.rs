use super::{adamw_step, dual_loss, flip_mosaic, lr_at, Flip, OptimizerState, TrainConfig};
use crate::adcore::Tape;
use crate::array::Array;
use crate::dataio::crop_rggb;
use crate::diffisp::run_isp;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nets::{forward_dual, ModelBundle};
use crate::rawmodel::{sample_noise_params_with, synthesize_noise, NoiseParams, RawImage, SamplerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const DATA_SALT: u64 = 0x5eed_da7a_0000_0001;

/// Everything random about one training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDraw {
    pub scene: usize,
    pub x: usize,
    pub y: usize,
    pub flip: Flip,
    pub noise: NoiseParams,
    pub alpha: f64,
    pub noise_seed: u64,
}

/// Sample `b` of iteration `iter`; depends only on `(cfg.seed, iter, b)`.
pub fn draw_sample(
    cfg: &TrainConfig,
    sampler: &SamplerConfig,
    scenes: &[RawImage],
    iter: usize,
    b: usize,
) -> Result<SampleDraw> {
    if scenes.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_SALT);
    rng.set_stream(iter as u64 * cfg.batch as u64 + b as u64);
    let scene = rng.random_range(0..scenes.len());
    let s = &scenes[scene];
    if s.height() < cfg.patch || s.width() < cfg.patch {
        return Err(Error::Data(format!(
            "scene {scene} is {}×{}, smaller than the {} patch",
            s.height(),
            s.width(),
            cfg.patch
        )));
    }
    let x = rng.random_range(0..=s.width() - cfg.patch);
    let y = rng.random_range(0..=s.height() - cfg.patch);
    let flip = Flip::draw(&mut rng);
    let ranged = SamplerConfig {
        k_min: cfg.k_range[0],
        k_max: cfg.k_range[1],
        ..*sampler
    };
    let noise = sample_noise_params_with(&ranged, &mut rng)?;
    let [a0, a1] = cfg.alpha_range;
    let alpha = a0 + (a1 - a0) * rng.random::<f64>();
    let noise_seed = rng.random();
    Ok(SampleDraw {
        scene,
        x,
        y,
        flip,
        noise,
        alpha,
        noise_seed,
    })
}

pub struct SampleGrad {
    pub loss: f64,
    pub raw: f64,
    pub srgb: f64,
    /// One gradient per bundle parameter, in `params()` order.
    pub grads: Vec<Array<f32>>,
}

/// Loss and weight gradients for one sample on its own f32 tape.
pub fn sample_gradients(
    bundle: &ModelBundle,
    scenes: &[RawImage],
    draw: &SampleDraw,
    cfg: &TrainConfig,
) -> Result<SampleGrad> {
    let patch = crop_rggb(&scenes[draw.scene], draw.x, draw.y, cfg.patch)?;
    let clean = RawImage::new(flip_mosaic(&patch.plane, draw.flip)?, patch.params.clone())?;
    let noisy = synthesize_noise(&clean, &draw.noise, draw.noise_seed)?;
    let p = clean.params.clone().with_alpha(draw.alpha);

    let tape = Tape::<f32>::training();
    let bound = bundle.bind(&tape, true);
    let out = forward_dual(noisy.to_tensor(&tape), &draw.noise, &p, &bound)?;
    let clean_raw = clean.to_tensor(&tape);
    let clean_srgb = run_isp(clean_raw, &p)?;
    let terms = dual_loss(out.raw, clean_raw, out.srgb, clean_srgb, cfg.lambda_raw)?;
    let loss = terms.loss.item()? as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("sample loss is {loss}")));
    }
    tape.backward(terms.loss)?;
    let grads = bound
        .tensors()
        .map(|t| t.grad().unwrap_or_else(|| Array::zeros(t.shape())))
        .collect();
    Ok(SampleGrad {
        loss,
        raw: terms.raw.item()? as f64,
        srgb: terms.srgb.item()? as f64,
        grads,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub raw_term: f64,
    pub srgb_term: f64,
}

/// One optimization step: per-sample gradients (concurrently under
/// `exec`), averaged in sample order, then AdamW at `lr_at(iter)`.
pub fn train_step(
    bundle: &mut ModelBundle,
    state: &mut OptimizerState,
    scenes: &[RawImage],
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
    iter: usize,
    exec: Exec,
) -> Result<StepLog> {
    let draws = (0..cfg.batch)
        .map(|b| draw_sample(cfg, sampler, scenes, iter, b))
        .collect::<Result<Vec<_>>>()?;
    let shared: &ModelBundle = bundle;
    let samples = exec
        .map(&draws, |d| sample_gradients(shared, scenes, d, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("iteration {iter}: {m}")),
            other => other,
        })?;

    let n = samples.len() as f64;
    let mut grads: Vec<Array<f32>> = samples[0].grads.iter().map(|g| Array::zeros(g.shape())).collect();
    let mut acc: Vec<Vec<f64>> = grads.iter().map(|g| vec![0.0; g.len()]).collect();
    for s in &samples {
        for (a, g) in acc.iter_mut().zip(&s.grads) {
            a.iter_mut().zip(g.data()).for_each(|(a, g)| *a += *g as f64);
        }
    }
    for (g, a) in grads.iter_mut().zip(&acc) {
        g.data_mut().iter_mut().zip(a).for_each(|(g, a)| *g = (a / n) as f32);
    }
    let mean = |f: fn(&SampleGrad) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let lr = lr_at(iter, cfg);
    adamw_step(
        bundle.params_mut().map(|p| &mut p.value),
        &grads,
        state,
        lr,
        cfg.betas,
        cfg.weight_decay,
    )
    .map_err(|e| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("iteration {iter}: {m}")),
        other => other,
    })?;
    Ok(StepLog {
        iter,
        lr,
        loss: mean(|s| s.loss),
        raw_term: mean(|s| s.raw),
        srgb_term: mean(|s| s.srgb),
    })
}
