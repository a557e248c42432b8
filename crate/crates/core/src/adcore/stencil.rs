//! Phase-dependent linear filtering of a single-plane 2×2-periodic mosaic,
//! with reflective borders. Carrier for the demosaic kernels.

use super::real::Real;
use super::tape::{GradSink, NodeId, Op, Tensor};
use crate::error::{dim_err, Result};
use std::sync::Arc;

/// One filter tap: row offset, column offset, weight.
pub type Tap = (isize, isize, f64);

/// `taps[phase][channel]` where `phase = 2·(y mod 2) + (x mod 2)`.
#[derive(Clone, Debug)]
pub struct StencilKernel {
    pub channels: usize,
    pub taps: [Vec<Vec<Tap>>; 4],
}

impl StencilKernel {
    pub fn radius(&self) -> usize {
        self.taps
            .iter()
            .flatten()
            .flatten()
            .map(|(dy, dx, _)| dy.unsigned_abs().max(dx.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn visit(h: usize, w: usize, kernel: &StencilKernel, mut f: impl FnMut(usize, usize, usize, f64)) {
    // f(channel, output pixel, input pixel, weight)
    for y in 0..h {
        for x in 0..w {
            let phase = 2 * (y % 2) + (x % 2);
            for (c, taps) in kernel.taps[phase].iter().enumerate() {
                for &(dy, dx, wt) in taps {
                    let iy = reflect(y as isize + dy, h);
                    let ix = reflect(x as isize + dx, w);
                    f(c, y * w + x, iy * w + ix, wt);
                }
            }
        }
    }
}

pub fn stencil<'t, T: Real>(x: Tensor<'t, T>, kernel: Arc<StencilKernel>) -> Result<Tensor<'t, T>> {
    let (n, c, h, w) = x.nchw()?;
    if c != 1 {
        return dim_err(format!("stencil expects a single-plane input, got {} channels", c));
    }
    if h % 2 != 0 || w % 2 != 0 {
        return dim_err(format!("stencil expects even dimensions, got {}x{}", h, w));
    }
    if kernel.radius() >= h.min(w) {
        return dim_err("stencil radius exceeds image size");
    }
    let v = x.value();
    let hw = h * w;
    let oc = kernel.channels;
    let mut out = vec![T::ZERO; n * oc * hw];
    // Σ wᵢxᵢ = x₀·Σwᵢ + Σ wᵢ(xᵢ − x₀): flat regions come out exact when the
    // weights sum to one.
    let sums: Vec<Vec<T>> = kernel
        .taps
        .iter()
        .map(|phase| phase.iter().map(|t| T::from_f64(t.iter().map(|tap| tap.2).sum())).collect())
        .collect();
    for s in 0..n {
        let src = &v[s * hw..(s + 1) * hw];
        let dst = &mut out[s * oc * hw..(s + 1) * oc * hw];
        visit(h, w, &kernel, |c, o, i, wt| dst[c * hw + o] += T::from_f64(wt) * (src[i] - src[o]));
        for o in 0..hw {
            let phase = 2 * ((o / w) % 2) + (o % w) % 2;
            for c in 0..oc {
                dst[c * hw + o] += sums[phase][c] * src[o];
            }
        }
    }
    let rg = x.requires_grad();
    Ok(x.tape.push(vec![n, oc, h, w], out, Op::Stencil { x: x.id, kernel }, rg))
}

pub(crate) fn stencil_backward<T: Real>(
    x: NodeId,
    kernel: &StencilKernel,
    out_shape: &[usize],
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    if !sink.wants(x) {
        return;
    }
    let (n, oc, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let hw = h * w;
    let gx = sink.slot(x);
    for s in 0..n {
        let go = &g[s * oc * hw..(s + 1) * oc * hw];
        let dst = &mut gx[s * hw..(s + 1) * hw];
        visit(h, w, kernel, |c, o, i, wt| dst[i] += T::from_f64(wt) * go[c * hw + o]);
    }
}
