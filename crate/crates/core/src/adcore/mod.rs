//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Provides exactly the operations the ISP and the denoisers need:
//! broadcasting pointwise arithmetic, 2-D convolution, pixel (un)shuffle,
//! channel concatenation, scalar reductions and a phase-dependent stencil
//! used for demosaicing. [`gradcheck`] compares any scalar function's tape
//! gradient with central finite differences.

mod conv;
mod elementwise;
mod gradcheck;
mod real;
mod reduce;
mod shuffle;
mod stencil;
mod tape;

pub use conv::conv2d;
pub use elementwise::{
    broadcast_shape, elementwise, srgb_gamma_scalar, srgb_gamma_slope, unary, BinaryOp, UnaryOp,
};
pub use gradcheck::{
    gradcheck, gradcheck_inputs, relative_error, GradCheckReport, DEFAULT_EPS, REL_FLOOR,
};
pub use real::Real;
pub use reduce::{compensated_sum, mean, reduce_mean_abs, sum};
pub use shuffle::{concat_channels, pixel_shuffle, pixel_unshuffle};
pub use stencil::{reflect, stencil, StencilKernel, Tap};
pub use tape::{Mode, NodeId, Tape, Tensor, GUARD_EPS};
