//! Raw-domain and sRGB-domain denoisers with noise-map fusion, and the
//! dual-domain forward pass through the ISP.

mod denoiser;

pub use denoiser::{nfb_fuse, Activation, BoundNet, Denoiser, Fusion, NetConfig, Param};

use crate::adcore::{Real, Tape, Tensor};
use crate::diffisp::{propagate_noise_map, run_isp, IspParams, MapMode};
use crate::error::{Error, Result};
use crate::rawmodel::{noise_map_variants, pack, unpack, NoiseMapForm, NoiseParams};
use serde::{Deserialize, Serialize};

/// Which denoisers a bundle carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dual,
    RawOnly,
    SrgbOnly,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dual => "dual",
            ModelKind::RawOnly => "raw_only",
            ModelKind::SrgbOnly => "srgb_only",
        }
    }
}

/// Weights and architecture of a raw denoiser, an sRGB denoiser, or both.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub raw: Option<Denoiser>,
    pub srgb: Option<Denoiser>,
    pub map_form: NoiseMapForm,
    pub map_mode: MapMode,
}

impl ModelBundle {
    /// Fresh bundle. Single-domain kinds get `2·depth` blocks so the total
    /// parameter count matches the dual bundle.
    pub fn new(kind: ModelKind, config: &NetConfig, fusion: Fusion, seed: u64) -> Result<Self> {
        config.validate()?;
        let double = NetConfig { depth: 2 * config.depth, ..*config };
        let (raw, srgb) = match kind {
            ModelKind::Dual => (
                Some(Denoiser::new("raw", 4, config, fusion, seed)?),
                Some(Denoiser::new("srgb", 3, config, fusion, seed.wrapping_add(1))?),
            ),
            ModelKind::RawOnly => (Some(Denoiser::new("raw", 4, &double, fusion, seed)?), None),
            ModelKind::SrgbOnly => (None, Some(Denoiser::new("srgb", 3, &double, fusion, seed.wrapping_add(1))?)),
        };
        Ok(Self {
            raw,
            srgb,
            map_form: NoiseMapForm::Std,
            map_mode: MapMode::SignalPath,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match (&self.raw, &self.srgb) {
            (Some(_), Some(_)) => ModelKind::Dual,
            (Some(_), None) => ModelKind::RawOnly,
            _ => ModelKind::SrgbOnly,
        }
    }

    pub fn nets(&self) -> impl Iterator<Item = &Denoiser> {
        self.raw.iter().chain(self.srgb.iter())
    }

    pub fn nets_mut(&mut self) -> impl Iterator<Item = &mut Denoiser> {
        self.raw.iter_mut().chain(self.srgb.iter_mut())
    }

    pub fn num_params(&self) -> usize {
        self.nets().map(Denoiser::num_params).sum()
    }

    /// All parameters in a fixed order (raw net first).
    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.nets().flat_map(|n| n.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.nets_mut().flat_map(|n| n.params.iter_mut())
    }

    pub fn validate(&self) -> Result<()> {
        if self.raw.is_none() && self.srgb.is_none() {
            return Err(Error::Data("model bundle holds no denoiser".into()));
        }
        for net in self.nets() {
            net.validate()?;
        }
        Ok(())
    }

    /// Place every weight on `tape`; as trainable leaves when `trainable`.
    pub fn bind<'t, T: Real>(&self, tape: &'t Tape<T>, trainable: bool) -> BoundBundle<'t, T> {
        BoundBundle {
            raw: self.raw.as_ref().map(|n| n.bind(tape, trainable)),
            srgb: self.srgb.as_ref().map(|n| n.bind(tape, trainable)),
            map_form: self.map_form,
            map_mode: self.map_mode,
        }
    }

    /// Bind from caller-provided tensors, in `params()` order.
    pub fn bind_tensors<'t, T: Real>(&self, tensors: &[Tensor<'t, T>]) -> Result<BoundBundle<'t, T>> {
        let nraw = self.raw.as_ref().map_or(0, |n| n.params.len());
        let nsrgb = self.srgb.as_ref().map_or(0, |n| n.params.len());
        if tensors.len() != nraw + nsrgb {
            return Err(Error::Dimension(format!(
                "bundle has {} tensors, got {}",
                nraw + nsrgb,
                tensors.len()
            )));
        }
        Ok(BoundBundle {
            raw: match &self.raw {
                Some(n) => Some(n.bind_tensors(&tensors[..nraw])?),
                None => None,
            },
            srgb: match &self.srgb {
                Some(n) => Some(n.bind_tensors(&tensors[nraw..])?),
                None => None,
            },
            map_form: self.map_form,
            map_mode: self.map_mode,
        })
    }
}

/// A bundle whose weights live on a tape.
pub struct BoundBundle<'t, T: Real> {
    pub raw: Option<BoundNet<'t, T>>,
    pub srgb: Option<BoundNet<'t, T>>,
    pub map_form: NoiseMapForm,
    pub map_mode: MapMode,
}

impl<'t, T: Real> BoundBundle<'t, T> {
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<'t, T>> {
        self.raw.iter().chain(self.srgb.iter()).flat_map(|n| n.tensors.iter())
    }
}

/// Denoise packed raw `packed` (N×4×h×w) given its noise map; long skip,
/// no clamp.
pub fn denoise_raw<'t, T: Real>(packed: Tensor<'t, T>, nmap4: Tensor<'t, T>, net: &BoundNet<'t, T>) -> Result<Tensor<'t, T>> {
    net.forward(packed, nmap4)
}

/// Denoise sRGB (N×3×H×W) given its noise map; long skip, then clamp01.
pub fn denoise_srgb<'t, T: Real>(srgb: Tensor<'t, T>, nmap3: Tensor<'t, T>, net: &BoundNet<'t, T>) -> Result<Tensor<'t, T>> {
    net.forward(srgb, nmap3)?.clamp01()
}

/// Outputs of a dual-domain forward pass.
pub struct DualOutput<'t, T: Real> {
    /// Denoised mosaic N×1×H×W (the noisy input itself when there is no raw net).
    pub raw: Tensor<'t, T>,
    pub srgb: Tensor<'t, T>,
}

/// pack → noise map → raw denoiser → unpack → ISP → propagated map →
/// sRGB denoiser. `noisy` is a normalized N×1×H×W RGGB mosaic.
pub fn forward_dual<'t, T: Real>(
    noisy: Tensor<'t, T>,
    np: &NoiseParams,
    p: &IspParams,
    bundle: &BoundBundle<'t, T>,
) -> Result<DualOutput<'t, T>> {
    let packed = pack(noisy)?;
    let nmap4 = noise_map_variants(packed, np, bundle.map_form)?;
    let raw = match &bundle.raw {
        Some(net) => unpack(denoise_raw(packed, nmap4, net)?)?,
        None => noisy,
    };
    let rendered = run_isp(raw, p)?;
    let srgb = match &bundle.srgb {
        Some(net) => {
            let nmap3 = propagate_noise_map(nmap4, raw, p, bundle.map_mode)?;
            denoise_srgb(rendered, nmap3, net)?
        }
        None => rendered,
    };
    Ok(DualOutput { raw, srgb })
}

#[cfg(test)]
mod tests;
