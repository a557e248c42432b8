//! Test-set comparison of noisy input against trained bundles at a fixed
//! noise level and tone curve.

use crate::adcore::Tape;
use crate::array::Array;
use crate::dataio::crop_rggb_full;
use crate::diffisp::{clahe_local_tm, run_isp, sharpen, IspParams, CLAHE_CLIP, CLAHE_TILES, SHARPEN_AMOUNT, SHARPEN_RADIUS};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{format_db, psnr, ssim};
use crate::nets::{forward_dual, ModelBundle};
use crate::rawmodel::{synthesize_noise, NoiseParams, RawImage, SamplerConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Inference-only stage appended after the ISP (and after the sRGB net).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostStage {
    #[default]
    None,
    Sharpen,
    Clahe,
}

impl PostStage {
    pub fn apply(self, img: &Array<f64>) -> Result<Array<f64>> {
        match self {
            PostStage::None => Ok(img.clone()),
            PostStage::Sharpen => sharpen(img, SHARPEN_AMOUNT, SHARPEN_RADIUS),
            PostStage::Clahe => clahe_local_tm(img, CLAHE_CLIP, CLAHE_TILES),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub k: f64,
    /// Read variance; `None` takes the sampler's mean line at `k`.
    pub sigma_r2: Option<f64>,
    pub alpha: f64,
    pub post: PostStage,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            k: 0.02,
            sigma_r2: None,
            alpha: 0.0,
            post: PostStage::None,
            seed: 0,
        }
    }
}

impl EvalSettings {
    pub fn noise(&self, sampler: &SamplerConfig) -> Result<NoiseParams> {
        NoiseParams::new(self.k, self.sigma_r2.unwrap_or_else(|| sampler.read_variance_at(self.k)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub scene: usize,
    pub k: f64,
    pub alpha: f64,
    pub post: PostStage,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = Vec::new();
        for r in &self.rows {
            if !m.contains(&r.method) {
                m.push(r.method.clone());
            }
        }
        m
    }

    pub fn mean_psnr(&self, method: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.method == method).map(|r| r.psnr_db).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_ssim(&self, method: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.method == method).map(|r| r.ssim).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "scene", "k", "alpha", "post", "psnr_db", "ssim"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.scene.to_string(),
                r.k.to_string(),
                r.alpha.to_string(),
                serde_json::to_value(r.post)?.as_str().unwrap_or_default().to_string(),
                format_db(r.psnr_db),
                format!("{:.6}", r.ssim),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// sRGB output of `bundle` for a noisy RGGB raw, in f64.
pub fn denoise(bundle: &ModelBundle, noisy: &RawImage, np: &NoiseParams, p: &IspParams) -> Result<Array<f64>> {
    let tape = Tape::<f32>::training();
    let bound = bundle.bind(&tape, false);
    let out = forward_dual(noisy.to_tensor(&tape), np, p, &bound)?;
    Ok(out.srgb.to_array().map(|v| v as f64))
}

/// Denoised raw mosaic (N×1×H×W) of `bundle`'s raw stage.
pub fn denoise_raw_only(bundle: &ModelBundle, noisy: &RawImage, np: &NoiseParams, p: &IspParams) -> Result<Array<f64>> {
    let tape = Tape::<f32>::training();
    let bound = bundle.bind(&tape, false);
    let out = forward_dual(noisy.to_tensor(&tape), np, p, &bound)?;
    Ok(out.raw.to_array().map(|v| v as f64))
}

fn render(raw: &RawImage, p: &IspParams) -> Result<Array<f64>> {
    let tape = Tape::<f64>::new();
    Ok(run_isp(raw.to_tensor(&tape), p)?.to_array())
}

/// PSNR/SSIM of the noisy input and of each named bundle on every scene.
/// Scene `i` gets noise seed `settings.seed + i`, identical for every method.
pub fn evaluate(
    scenes: &[RawImage],
    bundles: &[(&str, &ModelBundle)],
    sampler: &SamplerConfig,
    settings: &EvalSettings,
    exec: Exec,
) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let np = settings.noise(sampler)?;
    let per_scene = exec.map_range(scenes.len(), |i| -> Result<Vec<EvalRow>> {
        let clean = crop_rggb_full(&scenes[i])?;
        let p = clean.params.clone().with_alpha(settings.alpha);
        let noisy = synthesize_noise(&clean, &np, settings.seed.wrapping_add(i as u64))?;
        let target = settings.post.apply(&render(&clean, &p)?)?;
        let mut rows = Vec::new();
        let mut push = |method: &str, img: Array<f64>| -> Result<()> {
            let img = settings.post.apply(&img)?;
            if let Some(v) = img.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Evaluation(format!("{method} output {v} leaves [0, 1] on scene {i}")));
            }
            rows.push(EvalRow {
                method: method.to_string(),
                scene: i,
                k: settings.k,
                alpha: settings.alpha,
                post: settings.post,
                psnr_db: psnr(&img, &target, 1.0)?,
                ssim: ssim(&img, &target)?,
            });
            Ok(())
        };
        push("noisy", render(&noisy, &p)?)?;
        for (name, b) in bundles {
            push(name, denoise(b, &noisy, &np, &p)?)?;
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_scene {
        rows.extend(r?);
    }
    Ok(EvalReport { rows })
}
