//! End-to-end optimization of the denoisers through the ISP.

mod augment;
mod checkpoint;
mod loss;
mod optim;
mod step;
mod trainer;

pub use augment::{augment, flip_mosaic, Flip};
pub use checkpoint::{latest_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{dual_loss, LossTerms};
pub use optim::{adamw_step, OptimizerState, ADAM_EPS};
pub use step::{draw_sample, sample_gradients, train_step, SampleDraw, SampleGrad, StepLog};
pub use trainer::{read_log, train, train_experiment, RunOptions, TrainOutcome, LOG_FILE};

use crate::diffisp::MapMode;
use crate::error::{Error, Result};
use crate::nets::{Fusion, ModelKind};
use crate::rawmodel::NoiseMapForm;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch: usize,
    /// Crop size in mosaic pixels.
    pub patch: usize,
    pub lr0: f64,
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub lambda_raw: f64,
    pub k_range: [f64; 2],
    pub alpha_range: [f64; 2],
    pub seed: u64,
    pub model: ModelKind,
    pub fusion: Fusion,
    pub map_form: NoiseMapForm,
    pub map_mode: MapMode,
    /// Save weights every this many iterations; 0 saves only the final ones.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Small-budget profile that runs on a desktop CPU.
    pub fn desk() -> Self {
        Self {
            iters: 2000,
            batch: 4,
            patch: 64,
            lr0: 1e-3,
            milestones: vec![1000, 1500],
            decay: 0.6,
            betas: (0.9, 0.999),
            weight_decay: 1e-2,
            lambda_raw: 1.0,
            k_range: [0.0002, 0.02],
            alpha_range: [0.0, 1.0],
            seed: 0,
            model: ModelKind::Dual,
            fusion: Fusion::Gated,
            map_form: NoiseMapForm::Std,
            map_mode: MapMode::SignalPath,
            checkpoint_every: 500,
        }
    }

    /// The full-length schedule.
    pub fn paper() -> Self {
        Self {
            iters: 120_000,
            batch: 2,
            patch: 256,
            lr0: 1e-5,
            milestones: vec![40_000, 60_000, 80_000, 100_000],
            checkpoint_every: 10_000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.patch == 0 || self.patch % 2 != 0 {
            return bad(format!("patch {} must be even and positive", self.patch));
        }
        if self.iters == 0 || self.batch == 0 {
            return bad("iters and batch must be positive".into());
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("milestones {:?} must be strictly increasing", self.milestones));
        }
        if self.milestones.last().is_some_and(|&m| m >= self.iters) {
            return bad(format!("milestones {:?} must lie below iters {}", self.milestones, self.iters));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay {} must lie in (0, 1)", self.decay));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 {} must be positive", self.lr0));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas {:?} must lie in [0, 1)", self.betas));
        }
        if self.weight_decay < 0.0 || self.lambda_raw < 0.0 {
            return bad("weight_decay and lambda_raw must be nonnegative".into());
        }
        let [k0, k1] = self.k_range;
        if !(k0 > 0.0 && k0 <= k1 && k1.is_finite()) {
            return bad(format!("k_range {:?} must satisfy 0 < lo <= hi", self.k_range));
        }
        let [a0, a1] = self.alpha_range;
        if !(0.0 <= a0 && a0 <= a1 && a1 <= 1.0) {
            return bad(format!("alpha_range {:?} must lie within [0, 1]", self.alpha_range));
        }
        Ok(())
    }
}

/// `lr0 · decay^(milestones passed)`.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    let passed = cfg.milestones.iter().filter(|&&m| m <= iter).count();
    cfg.lr0 * cfg.decay.powi(passed as i32)
}

#[cfg(test)]
mod tests;
