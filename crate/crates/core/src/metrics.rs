//! Full-reference image quality: PSNR and single-scale SSIM.
//!
//! Inputs are plain arrays shaped `H×W`, `C×H×W` or `N×C×H×W` with `C` of
//! 1 or 3. Everything accumulates in f64 in a fixed order.

use crate::adcore::Real;
use crate::array::Array;
use crate::error::{dim_err, param_err, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

fn same_shape<T>(a: &Array<T>, b: &Array<T>) -> Result<()>
where
    T: Copy,
{
    if a.shape() != b.shape() {
        return dim_err(format!("metric inputs differ in shape: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

pub fn mse<T: Real>(a: &Array<T>, b: &Array<T>) -> Result<f64> {
    same_shape(a, b)?;
    if a.is_empty() {
        return dim_err("metric inputs are empty");
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

/// `10·log10(peak²/MSE)`; `+∞` for identical inputs.
pub fn psnr<T: Real>(a: &Array<T>, b: &Array<T>, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Splits a metric input into grayscale planes of `h×w`.
fn gray_planes<T: Real>(a: &Array<T>) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    let s = a.shape();
    let (n, c, h, w) = match *s {
        [h, w] => (1, 1, h, w),
        [c, h, w] => (1, c, h, w),
        [n, c, h, w] => (n, c, h, w),
        _ => return dim_err(format!("cannot read {s:?} as images")),
    };
    let d = a.data();
    let hw = h * w;
    let planes = (0..n)
        .map(|i| {
            let img = &d[i * c * hw..(i + 1) * c * hw];
            match c {
                1 => Ok(img.iter().map(|v| v.to_f64()).collect()),
                3 => Ok((0..hw)
                    .map(|p| {
                        LUMA_WEIGHTS[0] * img[p].to_f64()
                            + LUMA_WEIGHTS[1] * img[hw + p].to_f64()
                            + LUMA_WEIGHTS[2] * img[2 * hw + p].to_f64()
                    })
                    .collect()),
                _ => dim_err(format!("SSIM takes 1 or 3 channels, got {c}")),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((planes, h, w))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable valid-mode filter: `(h−10)×(w−10)` outputs.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            let base = y * w + ox;
            rows[y * ow + ox] = (0..SSIM_WINDOW).map(|k| g[k] * x[base + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(oy + k) * ow + ox]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> f64 {
    let g = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &g);
    let mu_b = filter_valid(b, h, w, &g);
    let aa = filter_valid(&prod(a, a), h, w, &g);
    let bb = filter_valid(&prod(b, b), h, w, &g);
    let ab = filter_valid(&prod(a, b), h, w, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM over images (and valid window positions) at peak 1.
pub fn ssim<T: Real>(a: &Array<T>, b: &Array<T>) -> Result<f64> {
    ssim_with_peak(a, b, 1.0)
}

pub fn ssim_with_peak<T: Real>(a: &Array<T>, b: &Array<T>, peak: f64) -> Result<f64> {
    same_shape(a, b)?;
    let (pa, h, w) = gray_planes(a)?;
    let (pb, _, _) = gray_planes(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return param_err(format!("SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {h}×{w}"));
    }
    let s: f64 = pa.iter().zip(&pb).map(|(x, y)| ssim_plane(x, y, h, w, peak)).sum();
    Ok(s / pa.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub n_pixels: usize,
}

impl MetricReport {
    pub fn compute<T: Real>(a: &Array<T>, b: &Array<T>) -> Result<Self> {
        let s = a.shape();
        let n_pixels: usize = s.iter().rev().take(2).product();
        let n_pixels = n_pixels * if s.len() == 4 { s[0] } else { 1 };
        Ok(Self {
            psnr_db: psnr(a, b, 1.0)?,
            ssim: ssim(a, b)?,
            n_pixels,
        })
    }
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Str(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value {s:?}"))),
    }
}

/// PSNR as a CSV cell: `inf` or the value with 4 decimals.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}
