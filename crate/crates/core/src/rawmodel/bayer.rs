use crate::adcore::{Real, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// 2×2 colour filter layout, named by the sites read left-to-right,
/// top-to-bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Bayer {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl Bayer {
    pub const ALL: [Bayer; 4] = [Bayer::Rggb, Bayer::Bggr, Bayer::Grbg, Bayer::Gbrg];

    /// (row, col) of the red site inside the 2×2 tile.
    pub fn red_offset(self) -> (usize, usize) {
        match self {
            Bayer::Rggb => (0, 0),
            Bayer::Grbg => (0, 1),
            Bayer::Gbrg => (1, 0),
            Bayer::Bggr => (1, 1),
        }
    }

    /// Colour index (0 = R, 1 = G, 2 = B) recorded at pixel (y, x).
    pub fn color_at(self, y: usize, x: usize) -> usize {
        let (ry, rx) = self.red_offset();
        match ((y + ry) % 2, (x + rx) % 2) {
            (0, 0) => 0,
            (1, 1) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Bayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bayer::Rggb => "RGGB",
            Bayer::Bggr => "BGGR",
            Bayer::Grbg => "GRBG",
            Bayer::Gbrg => "GBRG",
        })
    }
}

impl FromStr for Bayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Bayer::Rggb),
            "BGGR" => Ok(Bayer::Bggr),
            "GRBG" => Ok(Bayer::Grbg),
            "GBRG" => Ok(Bayer::Gbrg),
            _ => Err(Error::Layout(format!("unknown bayer layout {s:?}"))),
        }
    }
}

/// Pack an RGGB mosaic N×1×H×W into N×4×(H/2)×(W/2) with channel order
/// [R, G (red row), G (blue row), B].
pub fn pack<'t, T: Real>(mosaic: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
    let (_, c, _, _) = mosaic.nchw()?;
    if c != 1 {
        return Err(Error::Dimension(format!("mosaic must have 1 channel, got {c}")));
    }
    mosaic.pixel_unshuffle(2)
}

pub fn unpack<'t, T: Real>(packed: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
    let (_, c, _, _) = packed.nchw()?;
    if c != 4 {
        return Err(Error::Dimension(format!("packed raw must have 4 channels, got {c}")));
    }
    packed.pixel_shuffle(2)
}
