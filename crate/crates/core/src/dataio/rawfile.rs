use super::SCHEMA_VERSION;
use crate::array::Array;
use crate::diffisp::IspParams;
use crate::error::{Error, Result};
use crate::rawmodel::RawImage;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// JSON sidecar of a `.rawbin` plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    #[serde(flatten)]
    pub params: IspParams,
}

/// `<stem>.rawbin` and `<stem>.json` for any of the pair's paths.
pub fn raw_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("rawbin"), path.with_extension("json"))
}

/// Normalized value → 16-bit digital number.
pub fn to_dn(v: f64, p: &IspParams) -> u16 {
    let dn = p.black_level as f64 + v * (p.white_level - p.black_level) as f64;
    dn.round().clamp(0.0, u16::MAX as f64) as u16
}

pub fn from_dn(dn: u16, p: &IspParams) -> f64 {
    (dn as f64 - p.black_level as f64) / (p.white_level - p.black_level) as f64
}

pub fn write_raw(path: &Path, raw: &RawImage) -> Result<()> {
    raw.params.validate()?;
    let (bin, json) = raw_paths(path);
    let bytes: Vec<u8> = raw.plane.data().iter().flat_map(|&v| to_dn(v, &raw.params).to_le_bytes()).collect();
    let side = RawSidecar {
        schema_version: SCHEMA_VERSION,
        width: raw.width(),
        height: raw.height(),
        params: raw.params.clone(),
    };
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<RawSidecar> {
    let (_, json) = raw_paths(path);
    let text = fs::read_to_string(&json)?;
    let side: RawSidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", json.display())))?;
    if side.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "{}: schema_version {} (expected {SCHEMA_VERSION})",
            json.display(),
            side.schema_version
        )));
    }
    side.params.validate()?;
    Ok(side)
}

/// Raw digital numbers and the sidecar, unconverted.
pub fn read_raw_dn(path: &Path) -> Result<(Vec<u16>, RawSidecar)> {
    let side = read_sidecar(path)?;
    let (bin, _) = raw_paths(path);
    let bytes = fs::read(&bin)?;
    if bytes.len() != 2 * side.width * side.height {
        return Err(Error::Data(format!(
            "{}: {} bytes, sidecar declares {}×{} (expected {})",
            bin.display(),
            bytes.len(),
            side.height,
            side.width,
            2 * side.width * side.height
        )));
    }
    let dn = bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    Ok((dn, side))
}

pub fn read_raw(path: &Path) -> Result<RawImage> {
    let (dn, side) = read_raw_dn(path)?;
    let plane = Array::new(
        [side.height, side.width],
        dn.iter().map(|&d| from_dn(d, &side.params)).collect(),
    )?;
    RawImage::new(plane, side.params)
}
