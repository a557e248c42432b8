//! Inference-only display stages used to probe robustness to ISP modules
//! never seen in training. They work on plain arrays, not the tape.

use crate::adcore::reflect;
use crate::array::Array;
use crate::error::{Error, Result};

pub const SHARPEN_AMOUNT: f64 = 0.5;
pub const SHARPEN_RADIUS: usize = 2;
pub const CLAHE_CLIP: f64 = 2.0;
pub const CLAHE_TILES: usize = 8;
pub const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

const BINS: usize = 256;

/// Normalized 1-D Gaussian taps over [-radius, radius], σ = radius/2.
pub fn gaussian_taps(radius: usize) -> Vec<f64> {
    if radius == 0 {
        return vec![1.0];
    }
    let sigma = radius as f64 / 2.0;
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable Gaussian blur of every plane, reflective borders.
pub fn gaussian_blur(img: &Array<f64>, radius: usize) -> Result<Array<f64>> {
    let (n, c, h, w) = img.nchw()?;
    let taps = gaussian_taps(radius);
    let r = radius as isize;
    let mut tmp = vec![0.0; img.len()];
    let mut out = vec![0.0; img.len()];
    for p in 0..n * c {
        let src = &img.data()[p * h * w..(p + 1) * h * w];
        let mid = &mut tmp[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                mid[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * src[y * w + reflect(x as isize + k as isize - r, w)])
                    .sum();
            }
        }
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * mid[reflect(y as isize + k as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
    Array::new(img.shape().to_vec(), out)
}

/// Unsharp mask x + amount·(x − blur(x)) without the final clamp.
pub fn unsharp(img: &Array<f64>, amount: f64, radius: usize) -> Result<Array<f64>> {
    let blur = gaussian_blur(img, radius)?;
    let data = img
        .data()
        .iter()
        .zip(blur.data())
        .map(|(x, b)| x + amount * (x - b))
        .collect();
    Array::new(img.shape().to_vec(), data)
}

pub fn sharpen(img: &Array<f64>, amount: f64, radius: usize) -> Result<Array<f64>> {
    Ok(unsharp(img, amount, radius)?.map(|v| v.clamp(0.0, 1.0)))
}

/// `None` for a flat tile, which maps every value to itself.
fn tile_lut(lum: &[f64], w: usize, ys: std::ops::Range<usize>, xs: std::ops::Range<usize>, clip: f64) -> Option<Vec<f64>> {
    let mut hist = [0.0f64; BINS];
    let mut count = 0.0;
    for y in ys {
        for x in xs.clone() {
            hist[bin(lum[y * w + x])] += 1.0;
            count += 1.0;
        }
    }
    let occupied = hist.iter().filter(|&&h| h > 0.0).count();
    if occupied <= 1 {
        return None;
    }
    let limit = (clip * count / BINS as f64).max(1.0);
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / BINS as f64;
    let mut cdf = 0.0;
    Some(
        hist.iter()
            .map(|h| {
                cdf += h + share;
                cdf / count
            })
            .collect(),
    )
}

fn bin(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * (BINS - 1) as f64).round()) as usize
}

/// Contrast-limited adaptive histogram equalization of the luminance of
/// an N×3×H×W image; chroma follows through the per-pixel luminance ratio.
pub fn clahe_local_tm(img: &Array<f64>, clip: f64, tiles: usize) -> Result<Array<f64>> {
    let (n, c, h, w) = img.nchw()?;
    if c != 3 {
        return Err(Error::Dimension(format!("CLAHE expects 3 channels, got {c}")));
    }
    if tiles == 0 || tiles > h || tiles > w {
        return Err(Error::Parameter(format!("{tiles}×{tiles} tiles do not fit a {h}×{w} image")));
    }
    if !(clip > 0.0) {
        return Err(Error::Parameter(format!("clip limit must be positive, got {clip}")));
    }
    let hw = h * w;
    let mut out = img.data().to_vec();
    let bounds = |t: usize, len: usize| (t * len / tiles)..((t + 1) * len / tiles);
    let centre = |t: usize, len: usize| {
        let r = bounds(t, len);
        (r.start + r.end) as f64 / 2.0 - 0.5
    };
    for s in 0..n {
        let base = &img.data()[s * 3 * hw..(s + 1) * 3 * hw];
        let lum: Vec<f64> = (0..hw)
            .map(|i| LUMA[0] * base[i] + LUMA[1] * base[hw + i] + LUMA[2] * base[2 * hw + i])
            .collect();
        let luts: Vec<Option<Vec<f64>>> = (0..tiles * tiles)
            .map(|t| tile_lut(&lum, w, bounds(t / tiles, h), bounds(t % tiles, w), clip))
            .collect();
        // Neighbouring tile indices and the weight of the second one.
        let locate = |p: usize, len: usize| {
            let pos = p as f64;
            if pos <= centre(0, len) {
                return (0, 0, 0.0);
            }
            if pos >= centre(tiles - 1, len) {
                return (tiles - 1, tiles - 1, 0.0);
            }
            let mut t = 0;
            while centre(t + 1, len) < pos {
                t += 1;
            }
            let (c0, c1) = (centre(t, len), centre(t + 1, len));
            (t, t + 1, (pos - c0) / (c1 - c0))
        };
        let dst = &mut out[s * 3 * hw..(s + 1) * 3 * hw];
        for y in 0..h {
            let (ty0, ty1, fy) = locate(y, h);
            for x in 0..w {
                let (tx0, tx1, fx) = locate(x, w);
                let i = y * w + x;
                let b = bin(lum[i]);
                let at = |ty: usize, tx: usize| luts[ty * tiles + tx].as_ref().map_or(lum[i], |l| l[b]);
                let top = at(ty0, tx0) * (1.0 - fx) + at(ty0, tx1) * fx;
                let bottom = at(ty1, tx0) * (1.0 - fx) + at(ty1, tx1) * fx;
                let mapped = top * (1.0 - fy) + bottom * fy;
                for ch in 0..3 {
                    let v = base[ch * hw + i];
                    dst[ch * hw + i] = if lum[i] > 0.0 { v * mapped / lum[i] } else { mapped };
                }
            }
        }
    }
    Ok(Array::new(img.shape().to_vec(), out)?.map(|v| v.clamp(0.0, 1.0)))
}
