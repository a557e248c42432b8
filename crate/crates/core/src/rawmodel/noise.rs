use crate::adcore::{Real, Tensor};
use crate::error::{Error, Result};
use crate::exec::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RawImage;

/// Above this Poisson mean the sampler switches from inversion to the
/// moment-matched normal.
pub const POISSON_INVERSION_MAX: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    #[serde(rename = "K")]
    pub k: f64,
    pub sigma_r2: f64,
}

impl NoiseParams {
    pub fn new(k: f64, sigma_r2: f64) -> Result<Self> {
        let np = Self { k, sigma_r2 };
        np.validate()?;
        Ok(np)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Parameter(format!("K must be > 0, got {}", self.k)));
        }
        if !(self.sigma_r2 >= 0.0 && self.sigma_r2.is_finite()) {
            return Err(Error::Parameter(format!("sigma_r2 must be >= 0, got {}", self.sigma_r2)));
        }
        Ok(())
    }

    /// Predicted per-pixel standard deviation at clean signal `x`.
    pub fn std_at(&self, x: f64) -> f64 {
        (self.k * x.max(0.0) + self.sigma_r2).sqrt()
    }
}

/// Joint (K, σ_r²) distribution: log-uniform K and a log-linear read-noise
/// relation with Gaussian residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub alpha_fit: f64,
    pub beta_fit: f64,
    pub sigma_fit: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k_min: 0.0002,
            k_max: 0.02,
            alpha_fit: 2.540,
            beta_fit: 1.218,
            sigma_fit: 0.268,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_min > 0.0 && self.k_min < self.k_max && self.k_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "need 0 < k_min < k_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if !(self.sigma_fit >= 0.0 && self.sigma_fit.is_finite()) {
            return Err(Error::Parameter(format!("sigma_fit must be >= 0, got {}", self.sigma_fit)));
        }
        if !(self.alpha_fit.is_finite() && self.beta_fit.is_finite()) {
            return Err(Error::Parameter("alpha_fit/beta_fit must be finite".into()));
        }
        Ok(())
    }

    /// Mean of ln σ_r² for a given K.
    pub fn mean_log_read(&self, k: f64) -> f64 {
        self.alpha_fit * k.ln() + self.beta_fit
    }

    /// σ_r² on the mean line (no residual) for a given K.
    pub fn read_variance_at(&self, k: f64) -> f64 {
        self.mean_log_read(k).exp()
    }
}

pub fn sample_noise_params(cfg: &SamplerConfig, seed: u64) -> Result<NoiseParams> {
    sample_noise_params_with(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_noise_params_with<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Result<NoiseParams> {
    cfg.validate()?;
    let u: f64 = rng.random();
    let log_k = cfg.k_min.ln() + u * (cfg.k_max.ln() - cfg.k_min.ln());
    // Rounding in exp/ln can land a hair outside the range.
    let k = log_k.exp().clamp(cfg.k_min, cfg.k_max);
    let z: f64 = StandardNormal.sample(rng);
    let log_read = cfg.mean_log_read(k) + cfg.sigma_fit * z;
    NoiseParams::new(k, log_read.exp())
}

fn poisson<R: Rng>(lambda: f64, rng: &mut R) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda > POISSON_INVERSION_MAX {
        let z: f64 = StandardNormal.sample(rng);
        return lambda + lambda.sqrt() * z;
    }
    let u: f64 = rng.random();
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0.0;
    while u > cdf {
        k += 1.0;
        p *= lambda / k;
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    k
}

/// Poisson-Gaussian noise on a row-major plane. Row `y` draws from ChaCha
/// stream `y` of `seed`, so results do not depend on execution order.
pub fn synthesize_plane(clean: &[f64], width: usize, np: &NoiseParams, seed: u64, exec: Exec) -> Result<Vec<f64>> {
    np.validate()?;
    if width == 0 || clean.len() % width != 0 {
        return Err(Error::Dimension(format!(
            "plane of {} values is not a multiple of width {width}",
            clean.len()
        )));
    }
    let mut out = clean.to_vec();
    let sigma_r = np.sigma_r2.sqrt();
    exec.for_each_chunk_mut(&mut out, width, |row, px| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        for v in px.iter_mut() {
            let shot = np.k * poisson(*v / np.k, &mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = shot + sigma_r * z;
        }
    });
    Ok(out)
}

pub fn synthesize_noise(clean: &RawImage, np: &NoiseParams, seed: u64) -> Result<RawImage> {
    let w = clean.width();
    let plane = synthesize_plane(clean.plane.data(), w, np, seed, Exec::default())?;
    Ok(RawImage {
        plane: crate::array::Array::new(clean.plane.shape().to_vec(), plane)?,
        params: clean.params.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMapForm {
    #[default]
    Std,
    Variance,
    Normalized,
    /// All-zero map: the denoisers receive no noise information.
    #[serde(rename = "none")]
    Disabled,
}

/// Per-pixel √(K·max(x,0) + σ_r²).
pub fn noise_map<'t, T: Real>(est_clean: Tensor<'t, T>, np: &NoiseParams) -> Result<Tensor<'t, T>> {
    noise_map_variants(est_clean, np, NoiseMapForm::Std)
}

pub fn noise_map_variants<'t, T: Real>(
    est_clean: Tensor<'t, T>,
    np: &NoiseParams,
    form: NoiseMapForm,
) -> Result<Tensor<'t, T>> {
    if form == NoiseMapForm::Disabled {
        return est_clean.mul_scalar(0.0);
    }
    let var = est_clean.relu()?.mul_scalar(np.k)?.add_scalar(np.sigma_r2)?;
    match form {
        NoiseMapForm::Variance => Ok(var),
        NoiseMapForm::Std => var.sqrt(),
        NoiseMapForm::Normalized => {
            let std = var.sqrt()?;
            let peak = std.value().iter().fold(0.0f64, |m, v| m.max(v.to_f64()));
            if peak > 0.0 {
                std.mul_scalar(1.0 / peak)
            } else {
                Ok(std)
            }
        }
        NoiseMapForm::Disabled => unreachable!(),
    }
}
