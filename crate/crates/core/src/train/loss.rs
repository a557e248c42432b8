use crate::adcore::{reduce_mean_abs, Real, Tensor};
use crate::error::Result;

pub struct LossTerms<'t, T: Real> {
    pub loss: Tensor<'t, T>,
    /// Mean |R − R*| over the mosaic.
    pub raw: Tensor<'t, T>,
    /// Mean |I − I*| over the sRGB image.
    pub srgb: Tensor<'t, T>,
}

/// `λ·mean|R − R*| + mean|I − I*|`.
pub fn dual_loss<'t, T: Real>(
    raw_out: Tensor<'t, T>,
    raw_clean: Tensor<'t, T>,
    srgb_out: Tensor<'t, T>,
    srgb_clean: Tensor<'t, T>,
    lambda_raw: f64,
) -> Result<LossTerms<'t, T>> {
    let raw = reduce_mean_abs(raw_out, raw_clean)?;
    let srgb = reduce_mean_abs(srgb_out, srgb_clean)?;
    let loss = raw.mul_scalar(lambda_raw)?.add(srgb)?;
    Ok(LossTerms { loss, raw, srgb })
}
