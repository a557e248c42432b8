//! Dual-domain raw/sRGB denoising trained end-to-end through a
//! differentiable camera ISP.
//!
//! The crate is organised bottom-up:
//!
//! - [`adcore`]: tape-based reverse-mode differentiation over dense tensors.
//! - [`rawmodel`]: Poisson-Gaussian noise synthesis, noise-parameter
//!   sampling, noise maps and Bayer packing.
//! - [`diffisp`]: the differentiable raw→sRGB pipeline plus the
//!   inference-only sharpen and CLAHE stages.
//! - [`nets`]: raw-domain and sRGB-domain denoisers with noise-map fusion.
//! - [`train`]: AdamW, learning-rate schedule, loss, augmentation and the
//!   training loop.
//! - [`metrics`]: PSNR and SSIM.
//! - [`dataio`]: file formats, procedural scenes, dataset generation and
//!   experiment configuration.
//! - [`eval`]: noisy / raw-only / sRGB-only / dual comparisons.
//! - [`gradsuite`]: the finite-difference suite behind `dualdn gradcheck`.

pub mod adcore;
pub mod array;
pub mod dataio;
pub mod diffisp;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gradsuite;
pub mod metrics;
pub mod nets;
pub mod rawmodel;
pub mod train;

pub use array::Array;
pub use error::{Error, Result};
pub use exec::Exec;
