//! On-disk formats, procedural scenes, RGGB-aligned cropping, dataset
//! generation and experiment configuration.

mod config;
mod image;
mod rawfile;
mod scenes;
mod weights;

pub use config::{
    check_disjoint, generate_dataset, procedural_dataset, procedural_raw, scene_seed, write_split, DataConfig,
    ExperimentConfig, GenConfig, IspOverrides, Manifest, OutputConfig,
};
pub use image::{quantize8, read_png8, write_png8};
pub use rawfile::{from_dn, raw_paths, read_raw, read_raw_dn, read_sidecar, to_dn, write_raw, RawSidecar};
pub use scenes::{crop_rggb, crop_rggb_full, crop_rggb_rect, mosaic_from_rgb, procedural_scene, random_camera};
pub use weights::{load_weights, save_weights, weights_paths, TensorEntry, WeightsManifest};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
