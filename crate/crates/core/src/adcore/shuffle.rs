//! Exact rearrangements: pixel (un)shuffle and channel concatenation.

use super::real::Real;
use super::tape::{GradSink, NodeId, Op, Tensor};
use crate::error::{dim_err, Result};

/// Index in the spatial (shuffled) layout N×C×(H·r)×(W·r) of each element of
/// the packed layout N×(C·r²)×H×W, visited in packed order.
fn packed_to_spatial(n: usize, c: usize, h: usize, w: usize, r: usize, mut f: impl FnMut(usize, usize)) {
    let (hs, ws) = (h * r, w * r);
    let mut packed = 0;
    for s in 0..n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    for y in 0..h {
                        let row = ((s * c + ch) * hs + y * r + i) * ws;
                        for x in 0..w {
                            f(packed, row + x * r + j);
                            packed += 1;
                        }
                    }
                }
            }
        }
    }
}

/// N×C×H×W → N×(C·r²)×(H/r)×(W/r); each r×r block becomes r² channels in
/// row-major block order.
pub fn pixel_unshuffle<'t, T: Real>(x: Tensor<'t, T>, r: usize) -> Result<Tensor<'t, T>> {
    let (n, c, h, w) = x.nchw()?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return dim_err(format!("pixel_unshuffle: {}x{} not divisible by {}", h, w, r));
    }
    let v = x.value();
    let mut out = vec![T::ZERO; v.len()];
    packed_to_spatial(n, c, h / r, w / r, r, |p, s| out[p] = v[s]);
    Ok(x.tape.push(
        vec![n, c * r * r, h / r, w / r],
        out,
        Op::Shuffle {
            x: x.id,
            r,
            unshuffle: true,
        },
        x.requires_grad(),
    ))
}

/// Exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<'t, T: Real>(x: Tensor<'t, T>, r: usize) -> Result<Tensor<'t, T>> {
    let (n, cr, h, w) = x.nchw()?;
    if r == 0 || cr % (r * r) != 0 {
        return dim_err(format!("pixel_shuffle: {} channels not divisible by {}", cr, r * r));
    }
    let c = cr / (r * r);
    let v = x.value();
    let mut out = vec![T::ZERO; v.len()];
    packed_to_spatial(n, c, h, w, r, |p, s| out[s] = v[p]);
    Ok(x.tape.push(
        vec![n, c, h * r, w * r],
        out,
        Op::Shuffle {
            x: x.id,
            r,
            unshuffle: false,
        },
        x.requires_grad(),
    ))
}

pub(crate) fn shuffle_backward<T: Real>(x: NodeId, r: usize, unshuffle: bool, g: &[T], sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let shape = sink.shape(x);
    let gx = sink.slot(x);
    if unshuffle {
        // x is spatial, output packed.
        let (n, c, h, w) = (shape[0], shape[1], shape[2] / r, shape[3] / r);
        packed_to_spatial(n, c, h, w, r, |p, s| gx[s] += g[p]);
    } else {
        let (n, c, h, w) = (shape[0], shape[1] / (r * r), shape[2], shape[3]);
        packed_to_spatial(n, c, h, w, r, |p, s| gx[p] += g[s]);
    }
}

/// Concatenation along the channel axis of NCHW tensors.
pub fn concat_channels<'t, T: Real>(parts: &[Tensor<'t, T>]) -> Result<Tensor<'t, T>> {
    let Some(first) = parts.first() else {
        return dim_err("concat of zero tensors");
    };
    let (n, _, h, w) = first.nchw()?;
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        p.same_tape(first)?;
        let (pn, pc, ph, pw) = p.nchw()?;
        if (pn, ph, pw) != (n, h, w) {
            return dim_err(format!(
                "concat: spatial/batch mismatch {:?} vs {:?}",
                p.shape(),
                first.shape()
            ));
        }
        channels.push(pc);
    }
    let total: usize = channels.iter().sum();
    let hw = h * w;
    let mut out = Vec::with_capacity(n * total * hw);
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    for s in 0..n {
        for (v, &c) in values.iter().zip(&channels) {
            out.extend_from_slice(&v[s * c * hw..(s + 1) * c * hw]);
        }
    }
    let rg = parts.iter().any(|p| p.requires_grad());
    Ok(first.tape.push(
        vec![n, total, h, w],
        out,
        Op::Concat {
            parts: parts.iter().map(|p| p.id).collect(),
        },
        rg,
    ))
}

pub(crate) fn concat_backward<T: Real>(parts: &[NodeId], g: &[T], sink: &mut GradSink<'_, T>) {
    let shape0 = sink.shape(parts[0]);
    let (n, hw) = (shape0[0], shape0[2] * shape0[3]);
    let channels: Vec<usize> = parts.iter().map(|p| sink.shape(*p)[1]).collect();
    let total: usize = channels.iter().sum();
    let mut offset = 0;
    for (&id, &c) in parts.iter().zip(&channels) {
        if sink.wants(id) {
            let gp = sink.slot(id);
            for s in 0..n {
                let src = &g[(s * total + offset) * hw..(s * total + offset + c) * hw];
                gp[s * c * hw..(s + 1) * c * hw]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, v)| *a += *v);
            }
        }
        offset += c;
    }
}

impl<'t, T: Real> Tensor<'t, T> {
    pub fn pixel_unshuffle(self, r: usize) -> Result<Self> {
        pixel_unshuffle(self, r)
    }
    pub fn pixel_shuffle(self, r: usize) -> Result<Self> {
        pixel_shuffle(self, r)
    }
}
