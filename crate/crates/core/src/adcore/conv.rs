//! 2-D cross-correlation (NCHW) lowered to im2col + GEMM.

use super::real::Real;
use super::tape::{GradSink, NodeId, Op, Tensor};
use crate::error::{dim_err, Result};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }
    fn positions(&self) -> usize {
        self.ho * self.wo
    }
    /// 1×1, stride 1, no padding: the input plane already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn geometry(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Geometry> {
    let (&[_, c, h, wd], &[_, wc, kh, kw]) = (x, w) else {
        return dim_err(format!("conv2d expects NCHW input and OIkk weight, got {:?} and {:?}", x, w));
    };
    if wc != c {
        return dim_err(format!("conv2d channel mismatch: input has {}, weight expects {}", c, wc));
    }
    if kh != kw {
        return dim_err(format!("conv2d needs a square kernel, got {}x{}", kh, kw));
    }
    if stride == 0 {
        return dim_err("conv2d stride must be positive");
    }
    if h + 2 * pad < kh || wd + 2 * pad < kw {
        return dim_err("conv2d kernel larger than padded input");
    }
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    Ok(Geometry {
        c,
        h,
        w: wd,
        k: kh,
        stride,
        pad,
        ho,
        wo,
    })
}

/// Output columns `ox` whose input column `ox·stride + kx − pad` lies inside the row.
fn valid_cols(g: &Geometry, kx: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kx).div_ceil(g.stride).min(g.wo);
    let hi = if g.w + g.pad > kx {
        ((g.w + g.pad - kx - 1) / g.stride + 1).min(g.wo)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.positions();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(T::ZERO);
                    line[hi..].fill(T::ZERO);
                    if lo == hi {
                        continue;
                    }
                    let first = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (v, s) in line[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *v = *s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let p = g.positions();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize || lo == hi {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.wo + lo..oy * g.wo + hi];
                    let first = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        dst[first..first + line.len()].iter_mut().zip(line).for_each(|(d, v)| *d += *v);
                    } else {
                        for (d, v) in dst[first..].iter_mut().step_by(g.stride).zip(line) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` (N×C×H×W) with `w` (O×C×k×k) plus optional bias (O).
pub fn conv2d<'t, T: Real>(
    x: Tensor<'t, T>,
    w: Tensor<'t, T>,
    bias: Option<Tensor<'t, T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<'t, T>> {
    x.same_tape(&w)?;
    let (xs, ws) = (x.shape(), w.shape());
    let g = geometry(&xs, &ws, stride, pad)?;
    let n = xs[0];
    let o = ws[0];
    if let Some(b) = bias {
        b.same_tape(&x)?;
        if b.numel() != o {
            return dim_err(format!("conv2d bias has {} entries, expected {}", b.numel(), o));
        }
    }
    let xv = x.value();
    let wv = w.value();
    let bv = bias.map(|b| b.value());
    let p = g.positions();
    let in_len = g.c * g.h * g.w;
    let mut out = vec![T::ZERO; n * o * p];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        T::take_scratch(g.patch() * p)
    };
    for s in 0..n {
        let xs_n = &xv[s * in_len..(s + 1) * in_len];
        let col: &[T] = if g.is_pointwise() {
            xs_n
        } else {
            im2col(xs_n, &g, &mut cols);
            &cols
        };
        let dst = &mut out[s * o * p..(s + 1) * o * p];
        if let Some(bv) = &bv {
            for (oc, row) in dst.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = bv[oc]);
            }
        }
        T::gemm(o, g.patch(), p, &wv, false, col, false, dst, bv.is_some());
    }
    T::give_scratch(cols);
    let rg = x.requires_grad() || w.requires_grad() || bias.is_some_and(|b| b.requires_grad());
    Ok(x.tape.push(
        vec![n, o, g.ho, g.wo],
        out,
        Op::Conv2d {
            x: x.id,
            w: w.id,
            b: bias.map(|b| b.id),
            stride,
            pad,
        },
        rg,
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Real>(
    x: NodeId,
    w: NodeId,
    b: Option<NodeId>,
    stride: usize,
    pad: usize,
    out_shape: &[usize],
    gout: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let g = geometry(sink.shape(x), sink.shape(w), stride, pad).expect("validated in forward");
    let n = out_shape[0];
    let o = out_shape[1];
    let p = g.positions();
    let in_len = g.c * g.h * g.w;
    let xv = sink.value(x);
    let wv = sink.value(w);

    if let Some(b) = b.filter(|b| sink.wants(*b)) {
        let gb = sink.slot(b);
        for s in 0..n {
            for (oc, row) in gout[s * o * p..(s + 1) * o * p].chunks(p).enumerate() {
                gb[oc] += row.iter().copied().sum::<T>();
            }
        }
    }

    let want_w = sink.wants(w);
    let want_x = sink.wants(x);
    let mut cols = if g.is_pointwise() || !want_w {
        Vec::new()
    } else {
        T::take_scratch(g.patch() * p)
    };
    let mut dcols = if want_x { T::take_scratch(g.patch() * p) } else { Vec::new() };
    for s in 0..n {
        let gy = &gout[s * o * p..(s + 1) * o * p];
        if want_w {
            let xs_n = &xv[s * in_len..(s + 1) * in_len];
            let col: &[T] = if g.is_pointwise() {
                xs_n
            } else {
                im2col(xs_n, &g, &mut cols);
                &cols
            };
            let gw = sink.slot(w);
            // dW (O × CKK) += dY (O × P) · colsᵀ
            T::gemm(o, p, g.patch(), gy, false, col, true, gw, true);
        }
        if want_x {
            // dcols (CKK × P) = Wᵀ · dY
            T::gemm(g.patch(), o, p, wv, true, gy, false, &mut dcols, false);
            let gx = &mut sink.slot(x)[s * in_len..(s + 1) * in_len];
            if g.is_pointwise() {
                gx.iter_mut().zip(&dcols).for_each(|(a, v)| *a += *v);
            } else {
                col2im(&dcols, &g, gx);
            }
        }
    }
    T::give_scratch(cols);
    T::give_scratch(dcols);
}

impl<'t, T: Real> Tensor<'t, T> {
    pub fn conv2d(self, w: Tensor<'t, T>, bias: Option<Tensor<'t, T>>, stride: usize, pad: usize) -> Result<Self> {
        conv2d(self, w, bias, stride, pad)
    }
}
