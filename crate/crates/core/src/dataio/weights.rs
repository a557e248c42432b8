use super::SCHEMA_VERSION;
use crate::array::Array;
use crate::diffisp::MapMode;
use crate::error::{Error, Result};
use crate::nets::{Fusion, ModelBundle, ModelKind, NetConfig};
use crate::rawmodel::NoiseMapForm;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// JSON manifest of a `.wbin` blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub schema_version: u32,
    pub kind: ModelKind,
    /// Per-domain config of the dual bundle; single-domain nets hold twice
    /// its depth.
    pub net_config: NetConfig,
    pub fusion: Fusion,
    pub map_form: NoiseMapForm,
    pub map_mode: MapMode,
    pub tensors: Vec<TensorEntry>,
}

pub fn weights_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("wbin"), path.with_extension("json"))
}

fn base_config(bundle: &ModelBundle) -> Result<NetConfig> {
    let net = bundle
        .nets()
        .next()
        .ok_or_else(|| Error::Data("model bundle holds no denoiser".into()))?;
    let depth = match bundle.kind() {
        ModelKind::Dual => net.config.depth,
        _ => net.config.depth / 2,
    };
    Ok(NetConfig { depth, ..net.config })
}

pub fn save_weights(path: &Path, bundle: &ModelBundle) -> Result<()> {
    bundle.validate()?;
    let (bin, json) = weights_paths(path);
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for p in bundle.params() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: blob.len(),
        });
        blob.extend(p.value.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    let fusion = bundle.nets().next().map(|n| n.fusion).unwrap_or_default();
    let manifest = WeightsManifest {
        schema_version: SCHEMA_VERSION,
        kind: bundle.kind(),
        net_config: base_config(bundle)?,
        fusion,
        map_form: bundle.map_form,
        map_mode: bundle.map_mode,
        tensors,
    };
    fs::write(bin, blob)?;
    fs::write(json, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Declared extents must cover `len` bytes exactly, without gaps or overlap.
fn check_tiling(entries: &[TensorEntry], len: usize) -> Result<()> {
    let mut spans: Vec<(usize, usize, &str)> = entries
        .iter()
        .map(|e| (e.offset, e.offset + 4 * e.shape.iter().product::<usize>(), e.name.as_str()))
        .collect();
    spans.sort();
    let mut cursor = 0;
    for (start, end, name) in spans {
        if start != cursor {
            return Err(Error::Data(format!(
                "tensor {name} starts at byte {start}, expected {cursor} (gap or overlap)"
            )));
        }
        cursor = end;
    }
    if cursor != len {
        return Err(Error::Data(format!("tensors cover {cursor} bytes of a {len}-byte blob")));
    }
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ModelBundle> {
    let (bin, json) = weights_paths(path);
    let text = fs::read_to_string(&json)?;
    let m: WeightsManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", json.display())))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "{}: schema_version {} (expected {SCHEMA_VERSION})",
            json.display(),
            m.schema_version
        )));
    }
    let blob = fs::read(&bin)?;
    check_tiling(&m.tensors, blob.len())?;
    let mut bundle = ModelBundle::new(m.kind, &m.net_config, m.fusion, 0)?;
    bundle.map_form = m.map_form;
    bundle.map_mode = m.map_mode;
    let expected = bundle.params().count();
    if expected != m.tensors.len() {
        return Err(Error::Data(format!(
            "{}: {} tensors listed, architecture needs {expected}",
            json.display(),
            m.tensors.len()
        )));
    }
    for (p, e) in bundle.params_mut().zip(&m.tensors) {
        if p.name != e.name || p.value.shape() != e.shape.as_slice() {
            return Err(Error::Data(format!(
                "tensor {} {:?} does not match architecture slot {} {:?}",
                e.name,
                e.shape,
                p.name,
                p.value.shape()
            )));
        }
        let bytes = &blob[e.offset..e.offset + 4 * p.value.len()];
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        p.value = Array::new(e.shape.clone(), data)?;
    }
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
pub(super) fn tiling(entries: &[TensorEntry], len: usize) -> Result<()> {
    check_tiling(entries, len)
}
