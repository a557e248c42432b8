use super::OptimizerState;
use crate::dataio::{load_weights, save_weights, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::nets::ModelBundle;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Weights and optimizer state after `iter` completed iterations.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub iter: usize,
    pub bundle: ModelBundle,
    pub state: OptimizerState,
}

#[derive(Serialize, Deserialize)]
struct OptManifest {
    schema_version: u32,
    iter: usize,
    step: u64,
    sizes: Vec<usize>,
}

fn stem(dir: &Path, iter: usize) -> PathBuf {
    dir.join(format!("ckpt_{iter:06}"))
}

fn opt_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let s = stem.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}_opt.bin")), PathBuf::from(format!("{s}_opt.json")))
}

/// Writes `ckpt_<iter>.{wbin,json}` and `ckpt_<iter>_opt.{bin,json}`.
pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = stem(dir, ck.iter);
    save_weights(&stem, &ck.bundle)?;
    let (bin, json) = opt_paths(&stem);
    let blob: Vec<u8> = ck
        .state
        .m
        .iter()
        .chain(&ck.state.v)
        .flatten()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(bin, blob)?;
    let m = OptManifest {
        schema_version: SCHEMA_VERSION,
        iter: ck.iter,
        step: ck.state.step,
        sizes: ck.state.sizes(),
    };
    fs::write(json, serde_json::to_string_pretty(&m)?)?;
    Ok(stem)
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint> {
    let bundle = load_weights(stem)?;
    let (bin, json) = opt_paths(stem);
    let m: OptManifest = serde_json::from_str(&fs::read_to_string(&json)?)
        .map_err(|e| Error::Format(format!("{}: {e}", json.display())))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!("{}: unsupported schema_version {}", json.display(), m.schema_version)));
    }
    let sizes: Vec<usize> = bundle.params().map(|p| p.value.len()).collect();
    if sizes != m.sizes {
        return Err(Error::Data(format!("{}: moment sizes do not match the weights", json.display())));
    }
    let blob = fs::read(&bin)?;
    let total: usize = sizes.iter().sum();
    if blob.len() != 16 * total {
        return Err(Error::Data(format!(
            "{}: {} bytes, expected {}",
            bin.display(),
            blob.len(),
            16 * total
        )));
    }
    let mut vals = blob.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    let mut take = |n: usize| (&mut vals).take(n).collect::<Vec<f64>>();
    let mm: Vec<Vec<f64>> = sizes.iter().map(|&n| take(n)).collect();
    let vv: Vec<Vec<f64>> = sizes.iter().map(|&n| take(n)).collect();
    Ok(Checkpoint {
        iter: m.iter,
        bundle,
        state: OptimizerState { m: mm, v: vv, step: m.step },
    })
}

/// Stem of the checkpoint with the most iterations in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<usize> = None;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        let iter = name
            .strip_prefix("ckpt_")
            .and_then(|r| r.strip_suffix("_opt.json"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(i) = iter {
            best = best.max(Some(i));
        }
    }
    Ok(best.map(|i| stem(dir, i)))
}
