use crate::array::Array;
use crate::diffisp::IspParams;
use crate::error::{Error, Result};
use crate::rawmodel::{Bayer, RawImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

fn blend(img: &mut [f64], hw: usize, p: usize, c: [f64; 3], a: f64) {
    for ch in 0..3 {
        let v = &mut img[ch * hw + p];
        *v = *v * (1.0 - a) + c[ch] * a;
    }
}

/// Linear-light 3×H×W test scene in [0, 1]: a colour gradient overlaid
/// with checkerboards, Gaussian blobs and band-limited textures.
pub fn procedural_scene(h: usize, w: usize, seed: u64) -> Array<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = h * w;
    let mut img = vec![0.0; 3 * hw];

    let (c0, c1) = (color(&mut rng, 0.05, 0.7), color(&mut rng, 0.05, 0.7));
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    let (dx, dy) = (theta.cos(), theta.sin());
    let span = (h as f64).hypot(w as f64);
    for y in 0..h {
        for x in 0..w {
            let t = (0.5 + ((x as f64 - w as f64 / 2.0) * dx + (y as f64 - h as f64 / 2.0) * dy) / span).clamp(0.0, 1.0);
            for ch in 0..3 {
                img[ch * hw + y * w + x] = c0[ch] * (1.0 - t) + c1[ch] * t;
            }
        }
    }

    let layers = rng.random_range(4..8);
    for _ in 0..layers {
        match rng.random_range(0..3) {
            0 => {
                let cell = [2usize, 3, 4, 6, 8, 12, 16][rng.random_range(0..7)];
                let (ca, cb) = (color(&mut rng, 0.0, 1.0), color(&mut rng, 0.0, 1.0));
                let (y0, x0) = (rng.random_range(0..h), rng.random_range(0..w));
                let (rh, rw) = (rng.random_range(h / 4..=h), rng.random_range(w / 4..=w));
                let a = rng.random_range(0.5..1.0);
                for y in y0..(y0 + rh).min(h) {
                    for x in x0..(x0 + rw).min(w) {
                        let c = if ((y - y0) / cell + (x - x0) / cell) % 2 == 0 { ca } else { cb };
                        blend(&mut img, hw, y * w + x, c, a);
                    }
                }
            }
            1 => {
                let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
                let s: f64 = rng.random_range(2.0..(h.min(w) as f64 / 3.0).max(2.5));
                let c = color(&mut rng, 0.0, 1.0);
                let peak = rng.random_range(0.4..1.0);
                for y in 0..h {
                    for x in 0..w {
                        let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        blend(&mut img, hw, y * w + x, c, peak * (-r2 / (2.0 * s * s)).exp());
                    }
                }
            }
            _ => {
                let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
                    .map(|_| {
                        let f = rng.random_range(0.02..0.25) * 2.0 * PI;
                        let th: f64 = rng.random_range(0.0..PI);
                        let ph = rng.random_range(0.0..2.0 * PI);
                        (f * th.cos(), f * th.sin(), ph, color(&mut rng, -0.04, 0.04))
                    })
                    .collect();
                for y in 0..h {
                    for x in 0..w {
                        for &(fx, fy, ph, amp) in &waves {
                            let s = (fx * x as f64 + fy * y as f64 + ph).sin();
                            for ch in 0..3 {
                                img[ch * hw + y * w + x] += amp[ch] * s;
                            }
                        }
                    }
                }
            }
        }
    }
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Array::new([3, h, w], img).expect("scene shape")
}

fn invert3(m: &[f64; 9]) -> Result<[f64; 9]> {
    let det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6]);
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::Parameter(format!("ccm is singular (det {det:e})")));
    }
    let adj = [
        m[4] * m[8] - m[5] * m[7],
        m[2] * m[7] - m[1] * m[8],
        m[1] * m[5] - m[2] * m[4],
        m[5] * m[6] - m[3] * m[8],
        m[0] * m[8] - m[2] * m[6],
        m[2] * m[3] - m[0] * m[5],
        m[3] * m[7] - m[4] * m[6],
        m[1] * m[6] - m[0] * m[7],
        m[0] * m[4] - m[1] * m[3],
    ];
    Ok(adj.map(|v| v / det))
}

/// Inverse of the linear ISP front end: undo the CCM and white balance,
/// keep the Bayer site colour per pixel and quantize to the DN grid.
pub fn mosaic_from_rgb(rgb: &Array<f64>, bayer: Bayer, p: &IspParams) -> Result<RawImage> {
    let (h, w) = match *rgb.shape() {
        [3, h, w] | [1, 3, h, w] => (h, w),
        _ => return Err(Error::Dimension(format!("expected 3×H×W linear RGB, got {:?}", rgb.shape()))),
    };
    let mut params = p.clone();
    params.bayer = bayer;
    params.validate()?;
    let inv = invert3(&params.ccm)?;
    let range = (params.white_level - params.black_level) as f64;
    let hw = h * w;
    let d = rgb.data();
    let plane = Array::from_fn([h, w], |i| {
        let (y, x) = (i / w, i % w);
        let c = bayer.color_at(y, x);
        let cam: f64 = (0..3).map(|j| inv[3 * c + j] * d[j * hw + i]).sum::<f64>() / params.wb_gains[c];
        (cam.clamp(0.0, 1.0) * range).round() / range
    });
    RawImage::new(plane, params)
}

/// Snap `v` to the nearest in-bounds offset with the given parity; ties go
/// to the smaller offset.
fn snap(v: usize, parity: usize, len: usize, limit: usize) -> Option<usize> {
    let fits = |c: usize| c + len <= limit;
    if v % 2 == parity {
        return fits(v).then_some(v);
    }
    let lower = v.checked_sub(1).filter(|c| fits(*c));
    lower.or_else(|| Some(v + 1).filter(|c| fits(*c)))
}

/// Crop an `h×w` patch whose top-left site is red, so the patch is RGGB.
pub fn crop_rggb_rect(raw: &RawImage, x: usize, y: usize, h: usize, w: usize) -> Result<RawImage> {
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::Parameter(format!("patch size {h}×{w} must be even and nonzero")));
    }
    let (ry, rx) = raw.bayer().red_offset();
    let out_of_bounds = || {
        Error::Bounds(format!(
            "{h}×{w} patch at ({x}, {y}) does not fit a {}×{} {} image",
            raw.height(),
            raw.width(),
            raw.bayer()
        ))
    };
    let sx = snap(x, rx, w, raw.width()).ok_or_else(out_of_bounds)?;
    let sy = snap(y, ry, h, raw.height()).ok_or_else(out_of_bounds)?;
    let src = raw.plane.data();
    let rw = raw.width();
    let plane = Array::from_fn([h, w], |i| src[(sy + i / w) * rw + sx + i % w]);
    let mut params = raw.params.clone();
    params.bayer = Bayer::Rggb;
    RawImage::new(plane, params)
}

/// Square RGGB-aligned crop; `(x, y)` is snapped to the nearest offset whose
/// top-left site is red.
pub fn crop_rggb(raw: &RawImage, x: usize, y: usize, size: usize) -> Result<RawImage> {
    crop_rggb_rect(raw, x, y, size, size)
}

/// The largest RGGB-aligned crop of the whole image.
pub fn crop_rggb_full(raw: &RawImage) -> Result<RawImage> {
    let (ry, rx) = raw.bayer().red_offset();
    let h = (raw.height() - ry) & !1;
    let w = (raw.width() - rx) & !1;
    crop_rggb_rect(raw, rx, ry, h, w)
}

/// A plausible camera: warm-sensor WB gains and a mildly saturating CCM
/// with unit row sums.
pub fn random_camera(seed: u64) -> IspParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ccm = [0.0; 9];
    for r in 0..3 {
        let a: f64 = rng.random_range(0.05..0.35);
        let b: f64 = rng.random_range(0.0..0.2);
        let (o1, o2) = ((r + 1) % 3, (r + 2) % 3);
        ccm[3 * r + r] = 1.0 + a + b;
        ccm[3 * r + o1] = -a;
        ccm[3 * r + o2] = -b;
    }
    IspParams {
        black_level: [0, 64, 512, 1024][rng.random_range(0..4)],
        white_level: [1023, 4095, 16383, 65535][rng.random_range(1..4)],
        wb_gains: [rng.random_range(1.5..2.5), 1.0, rng.random_range(1.3..2.2)],
        ccm,
        bayer: Bayer::ALL[rng.random_range(0..4)],
        ..IspParams::identity()
    }
}
