use crate::error::{Error, Result};
use crate::rawmodel::Bayer;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DemosaicKind {
    Bilinear,
    #[default]
    GradientCorrected,
}

/// How the raw noise map is carried into the sRGB domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    /// Run the map through every stage exactly as an image would be.
    #[default]
    SignalPath,
    /// Linear stages as a signal, then scale by the tone/gamma slopes at the
    /// accompanying image values.
    Linearized,
}

/// Per-image ISP metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IspParams {
    pub black_level: u32,
    pub white_level: u32,
    pub wb_gains: [f64; 3],
    /// Row-major camera RGB → sRGB primaries.
    pub ccm: [f64; 9],
    pub bayer: Bayer,
    #[serde(default)]
    pub alpha_tm: f64,
    #[serde(default)]
    pub demosaic: DemosaicKind,
    #[serde(default = "default_true")]
    pub gamma: bool,
}

fn default_true() -> bool {
    true
}

pub const IDENTITY_CCM: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

impl Default for IspParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl IspParams {
    /// Black 0, 16-bit white, unit gains, identity CCM, α = 0, RGGB.
    pub fn identity() -> Self {
        Self {
            black_level: 0,
            white_level: 65535,
            wb_gains: [1.0; 3],
            ccm: IDENTITY_CCM,
            bayer: Bayer::Rggb,
            alpha_tm: 0.0,
            demosaic: DemosaicKind::GradientCorrected,
            gamma: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.white_level <= self.black_level {
            return Err(Error::Parameter(format!(
                "white level {} must exceed black level {}",
                self.white_level, self.black_level
            )));
        }
        if self.wb_gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::Parameter(format!("wb gains must be positive, got {:?}", self.wb_gains)));
        }
        if self.ccm.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("ccm must be finite".into()));
        }
        for (r, row) in self.ccm.chunks(3).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Parameter(format!("ccm row {r} sums to {s}, expected 1")));
            }
        }
        check_alpha(self.alpha_tm)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_tm = alpha;
        self
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("tone amplification alpha must lie in [0,1], got {alpha}")));
    }
    Ok(())
}
