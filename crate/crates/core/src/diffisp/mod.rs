//! Differentiable raw → sRGB pipeline driven by per-image metadata, plus
//! the inference-only sharpen and CLAHE stages.

mod demosaic;
mod params;
mod post;
mod stages;

pub use demosaic::kernel as demosaic_kernel;
pub use params::{DemosaicKind, IspParams, MapMode, IDENTITY_CCM};
pub use post::{
    clahe_local_tm, gaussian_blur, gaussian_taps, sharpen, unsharp, CLAHE_CLIP, CLAHE_TILES, LUMA, SHARPEN_AMOUNT,
    SHARPEN_RADIUS,
};
pub use stages::{
    color_correct, demosaic, gamma_encode, global_tonemap, global_tonemap_tensor, normalize_black_white,
    propagate_noise_map, run_isp, run_isp_dn, tone_scalar, tone_slope, white_balance, TONE_ITERS,
};
