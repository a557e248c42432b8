//! Raw sensor model: Poisson-Gaussian noise synthesis, noise-parameter
//! sampling, noise maps and Bayer packing.

mod bayer;
mod noise;

pub use bayer::{pack, unpack, Bayer};
pub use noise::{
    noise_map, noise_map_variants, sample_noise_params, sample_noise_params_with, synthesize_noise,
    synthesize_plane, NoiseMapForm, NoiseParams, SamplerConfig, POISSON_INVERSION_MAX,
};

use crate::adcore::{Real, Tape, Tensor};
use crate::array::Array;
use crate::diffisp::IspParams;
use crate::error::{Error, Result};

/// Single-plane Bayer mosaic in normalized units, where 0 is the black
/// level and 1 the white level. Noisy planes may leave [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub plane: Array<f64>,
    pub params: IspParams,
}

impl RawImage {
    pub fn new(plane: Array<f64>, params: IspParams) -> Result<Self> {
        if plane.shape().len() != 2 {
            return Err(Error::Dimension(format!("raw plane must be H×W, got {:?}", plane.shape())));
        }
        if let Some(v) = plane.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("raw plane contains {v}")));
        }
        Ok(Self { plane, params })
    }

    pub fn height(&self) -> usize {
        self.plane.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.plane.shape()[1]
    }

    pub fn bayer(&self) -> Bayer {
        self.params.bayer
    }

    /// The plane as a 1×1×H×W constant on `tape`.
    pub fn to_tensor<'t, T: Real>(&self, tape: &'t Tape<T>) -> Tensor<'t, T> {
        let a = Array::new(
            vec![1, 1, self.height(), self.width()],
            self.plane.data().iter().map(|&v| T::from_f64(v)).collect(),
        )
        .expect("plane shape");
        tape.constant(&a)
    }
}

/// Pack an RGGB raw image into a 1×4×(H/2)×(W/2) tensor [R, G, G, B].
pub fn pack_bayer<'t, T: Real>(raw: &RawImage, tape: &'t Tape<T>) -> Result<Tensor<'t, T>> {
    if raw.bayer() != Bayer::Rggb {
        return Err(Error::Layout(format!(
            "packing requires an RGGB mosaic, got {} (crop with crop_rggb first)",
            raw.bayer()
        )));
    }
    pack(raw.to_tensor(tape))
}

#[cfg(test)]
mod tests;
