use super::{mosaic_from_rgb, procedural_scene, random_camera, read_raw, write_raw, SCHEMA_VERSION};
use crate::diffisp::{DemosaicKind, IspParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nets::NetConfig;
use crate::rawmodel::{RawImage, SamplerConfig};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

/// ISP fields an experiment may force on every image.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IspOverrides {
    pub alpha_tm: Option<f64>,
    pub demosaic: Option<DemosaicKind>,
    pub gamma: Option<bool>,
}

impl IspOverrides {
    pub fn apply(&self, p: &IspParams) -> IspParams {
        let mut p = p.clone();
        if let Some(a) = self.alpha_tm {
            p.alpha_tm = a;
        }
        if let Some(d) = self.demosaic {
            p.demosaic = d;
        }
        if let Some(g) = self.gamma {
            p.gamma = g;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub train_count: usize,
    pub test_count: usize,
    /// Scene height and width in pixels.
    pub size: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            train_count: 64,
            test_count: 16,
            size: 128,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    #[serde(default)]
    pub gen: GenConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub out_dir: Option<PathBuf>,
    pub eval_csv: Option<PathBuf>,
}

/// One JSON document describing a whole experiment. Relative paths are
/// resolved against the document's directory on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub isp: IspOverrides,
    #[serde(default)]
    pub net: NetConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "{}: schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.train_manifest = resolve(base, &cfg.data.train_manifest);
        cfg.data.test_manifest = resolve(base, &cfg.data.test_manifest);
        cfg.outputs.out_dir = cfg.outputs.out_dir.as_deref().map(|p| resolve(base, p));
        cfg.outputs.eval_csv = cfg.outputs.eval_csv.as_deref().map(|p| resolve(base, p));
        cfg.train.validate()?;
        cfg.sampler.validate()?;
        cfg.net.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Both manifests load, every file exists, and the splits share nothing.
    pub fn check_data(&self) -> Result<(Manifest, Manifest)> {
        let train = Manifest::load(&self.data.train_manifest)?;
        let test = Manifest::load(&self.data.test_manifest)?;
        check_disjoint(&train, &test)?;
        Ok((train, test))
    }
}

/// A list of raw containers; paths are relative to the manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub files: Vec<PathBuf>,
    #[serde(skip)]
    pub base: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m: Self =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("{}: unsupported schema_version {}", path.display(), m.schema_version)));
        }
        m.base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        for f in m.paths() {
            if !f.with_extension("rawbin").is_file() || !f.with_extension("json").is_file() {
                return Err(Error::Data(format!("{} lists missing file {}", path.display(), f.display())));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.files.iter().map(|f| resolve(&self.base, f)).collect()
    }

    pub fn load_images(&self) -> Result<Vec<RawImage>> {
        self.paths().iter().map(|p| read_raw(p)).collect()
    }
}

fn canonical(p: &Path) -> PathBuf {
    fs::canonicalize(p.with_extension("rawbin")).unwrap_or_else(|_| p.to_path_buf())
}

/// Training must never see a test file.
pub fn check_disjoint(train: &Manifest, test: &Manifest) -> Result<()> {
    let seen: HashSet<PathBuf> = train.paths().iter().map(|p| canonical(p)).collect();
    if let Some(shared) = test.paths().iter().find(|p| seen.contains(&canonical(p))) {
        return Err(Error::Data(format!(
            "train and test manifests both list {}",
            shared.display()
        )));
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of scene `index` in split `split` derived from a master seed.
pub fn scene_seed(master: u64, split: u64, index: usize) -> u64 {
    splitmix(splitmix(master ^ (split << 56)) ^ index as u64)
}

/// A clean raw scene under a random camera.
pub fn procedural_raw(size: usize, seed: u64) -> Result<RawImage> {
    let rgb = procedural_scene(size, size, seed);
    let cam = random_camera(seed ^ 0xca3e_7a00);
    mosaic_from_rgb(&rgb, cam.bayer, &cam)
}

/// In-memory train and test scenes, no files.
pub fn procedural_dataset(gen: &GenConfig, exec: Exec) -> Result<(Vec<RawImage>, Vec<RawImage>)> {
    let make = |split: u64, n: usize| -> Result<Vec<RawImage>> {
        exec.map_range(n, |i| procedural_raw(gen.size, scene_seed(gen.seed, split, i)))
            .into_iter()
            .collect()
    };
    Ok((make(0, gen.train_count)?, make(1, gen.test_count)?))
}

/// Write scenes as raw containers into `dir` and return the manifest.
pub fn write_split(dir: &Path, prefix: &str, scenes: &[RawImage], manifest_path: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut files = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let path = dir.join(format!("{prefix}_{i:04}.rawbin"));
        write_raw(&path, s)?;
        files.push(path.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(path));
    }
    let m = Manifest {
        schema_version: SCHEMA_VERSION,
        files,
        base,
    };
    m.save(manifest_path)?;
    Ok(m)
}

/// Procedural dataset on disk: `<dir>/{train,test}_NNNN` containers plus the
/// two manifests named in `data`.
pub fn generate_dataset(dir: &Path, data: &DataConfig, exec: Exec) -> Result<(Manifest, Manifest)> {
    let (train, test) = procedural_dataset(&data.gen, exec)?;
    let tr = write_split(dir, "train", &train, &data.train_manifest)?;
    let te = write_split(dir, "test", &test, &data.test_manifest)?;
    Ok((tr, te))
}
