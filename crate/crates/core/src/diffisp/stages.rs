use super::demosaic as kernels;
use super::params::{check_alpha, IspParams, MapMode};
use crate::adcore::{srgb_gamma_slope, Real, Tensor};
use crate::array::Array;
use crate::error::{Error, Result};
use crate::rawmodel::{pack, unpack, Bayer};

/// Tone-curve iterations.
pub const TONE_ITERS: usize = 2;

fn channel_const<'t, T: Real>(like: Tensor<'t, T>, values: &[f64]) -> Tensor<'t, T> {
    let a = Array::new(
        vec![1, values.len(), 1, 1],
        values.iter().map(|&v| T::from_f64(v)).collect(),
    )
    .expect("channel constant");
    like.tape().constant(&a)
}

/// (x − black)/(white − black), clamped to [0, 1].
pub fn normalize_black_white<'t, T: Real>(raw_dn: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    if p.white_level <= p.black_level {
        return Err(Error::Parameter(format!(
            "white level {} must exceed black level {}",
            p.white_level, p.black_level
        )));
    }
    let b = p.black_level as f64;
    let scale = 1.0 / (p.white_level as f64 - b);
    raw_dn.add_scalar(-b)?.mul_scalar(scale)?.clamp01()
}

/// Channelwise [g_R, g_G, g_G, g_B] on a packed raw, clamped to [0, 1].
pub fn white_balance<'t, T: Real>(packed: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    wb_gain(packed, p)?.clamp01()
}

fn wb_gain<'t, T: Real>(packed: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    let (_, c, _, _) = packed.nchw()?;
    if c != 4 {
        return Err(Error::Dimension(format!("white balance expects 4 packed channels, got {c}")));
    }
    let [r, g, b] = p.wb_gains;
    packed.mul(channel_const(packed, &[r, g, g, b]))
}

/// N×1×H×W RGGB mosaic → N×3×H×W linear RGB.
pub fn demosaic<'t, T: Real>(mosaic: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    if p.bayer != Bayer::Rggb {
        return Err(Error::Layout(format!("demosaic expects an RGGB mosaic, got {}", p.bayer)));
    }
    kernels::apply(mosaic, p.demosaic)
}

fn ccm_matmul<'t, T: Real>(rgb: Tensor<'t, T>, ccm: &[f64; 9]) -> Result<Tensor<'t, T>> {
    let w = Array::new(vec![3, 3, 1, 1], ccm.iter().map(|&v| T::from_f64(v)).collect())?;
    let w = rgb.tape().constant(&w);
    rgb.conv2d(w, None, 1, 0)
}

/// Per-pixel 3×3 matrix multiply, clamped to [0, 1].
pub fn color_correct<'t, T: Real>(rgb: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    ccm_matmul(rgb, &p.ccm)?.clamp01()
}

/// R ← R + α·R·(1 − R), `n_iter` times.
pub fn global_tonemap<'t, T: Real>(rgb: Tensor<'t, T>, alpha: f64, n_iter: usize) -> Result<Tensor<'t, T>> {
    check_alpha(alpha)?;
    let a = rgb.tape().scalar(alpha);
    tonemap_with(rgb, a, n_iter)
}

/// Tone curve with α as a rank-0 tensor, so α itself can carry gradients.
pub fn global_tonemap_tensor<'t, T: Real>(
    rgb: Tensor<'t, T>,
    alpha: Tensor<'t, T>,
    n_iter: usize,
) -> Result<Tensor<'t, T>> {
    check_alpha(alpha.item()?.to_f64())?;
    tonemap_with(rgb, alpha, n_iter)
}

fn tonemap_with<'t, T: Real>(rgb: Tensor<'t, T>, alpha: Tensor<'t, T>, n_iter: usize) -> Result<Tensor<'t, T>> {
    let mut r = rgb;
    for _ in 0..n_iter {
        r = r.add(r.mul(r.rsub_scalar(1.0)?)?.mul(alpha)?)?;
    }
    Ok(r)
}

/// Scalar tone curve, for tests and slope bookkeeping.
pub fn tone_scalar(x: f64, alpha: f64, n_iter: usize) -> f64 {
    (0..n_iter).fold(x, |r, _| r + alpha * r * (1.0 - r))
}

/// d/dx of the tone curve at x.
pub fn tone_slope(x: f64, alpha: f64, n_iter: usize) -> f64 {
    let mut r = x;
    let mut slope = 1.0;
    for _ in 0..n_iter {
        slope *= 1.0 + alpha * (1.0 - 2.0 * r);
        r += alpha * r * (1.0 - r);
    }
    slope
}

pub fn gamma_encode<'t, T: Real>(rgb: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
    rgb.srgb_gamma()
}

/// Everything after the input clamp: pack → WB → unpack → demosaic → CCM.
fn linear_front<'t, T: Real>(mosaic: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    let packed = white_balance(pack(mosaic)?, p)?;
    let rgb = demosaic(unpack(packed)?, p)?;
    color_correct(rgb, p)
}

/// Render a normalized N×1×H×W mosaic (0 = black level, 1 = white level)
/// to sRGB. The normalize stage reduces to a clamp in these units.
pub fn run_isp<'t, T: Real>(mosaic: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    p.validate()?;
    let rgb = linear_front(mosaic.clamp01()?, p)?;
    finish(rgb, p)
}

/// Same pipeline starting from digital numbers.
pub fn run_isp_dn<'t, T: Real>(raw_dn: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    p.validate()?;
    let rgb = linear_front(normalize_black_white(raw_dn, p)?, p)?;
    finish(rgb, p)
}

fn finish<'t, T: Real>(rgb: Tensor<'t, T>, p: &IspParams) -> Result<Tensor<'t, T>> {
    let mut out = global_tonemap(rgb, p.alpha_tm, TONE_ITERS)?;
    if p.gamma {
        out = gamma_encode(out)?;
    }
    out.clamp01()
}

/// Carry a packed raw noise map (N×4×H/2×W/2) into the sRGB domain
/// alongside the normalized mosaic it describes.
pub fn propagate_noise_map<'t, T: Real>(
    nmap4: Tensor<'t, T>,
    mosaic: Tensor<'t, T>,
    p: &IspParams,
    mode: MapMode,
) -> Result<Tensor<'t, T>> {
    p.validate()?;
    let (n, c, h, w) = mosaic.nchw()?;
    let expect = vec![n, 4 * c, h / 2, w / 2];
    if c != 1 || h % 2 != 0 || w % 2 != 0 || nmap4.shape() != expect {
        return Err(Error::Dimension(format!(
            "noise map {:?} does not accompany mosaic {:?}",
            nmap4.shape(),
            mosaic.shape()
        )));
    }
    let mut abs_ccm = p.ccm;
    abs_ccm.iter_mut().for_each(|v| *v = v.abs());
    match mode {
        MapMode::SignalPath => {
            let q = IspParams { ccm: abs_ccm, ..p.clone() };
            let packed = white_balance(nmap4, &q)?;
            let rgb = demosaic(unpack(packed)?, &q)?;
            finish(ccm_matmul(rgb, &abs_ccm)?.clamp01()?, &q)
        }
        MapMode::Linearized => {
            let rgb = demosaic(unpack(wb_gain(nmap4, p)?)?, p)?;
            let mapped = ccm_matmul(rgb, &abs_ccm)?.relu()?;
            // Slopes are evaluated on the image values and enter as constants.
            let image = {
                let t = crate::adcore::Tape::<f64>::new();
                let m = t.constant(&mosaic.to_array().map(|v| v.to_f64()));
                linear_front(m.clamp01()?, p)?.to_array()
            };
            let slopes: Vec<T> = image
                .data()
                .iter()
                .map(|&y| {
                    let mut s = tone_slope(y, p.alpha_tm, TONE_ITERS);
                    if p.gamma {
                        s *= srgb_gamma_slope(tone_scalar(y, p.alpha_tm, TONE_ITERS));
                    }
                    T::from_f64(s)
                })
                .collect();
            let slopes = mapped.tape().constant(&Array::new(image.shape().to_vec(), slopes)?);
            mapped.mul(slopes)
        }
    }
}
