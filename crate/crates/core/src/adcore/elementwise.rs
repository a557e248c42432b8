//! Pointwise unary and broadcasting binary operations.

use super::real::Real;
use super::tape::{GradSink, Mode, NodeId, Op, Tensor, GUARD_EPS};
use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
    Square,
    Sigmoid,
    Relu,
    LeakyRelu(f64),
    Clamp01,
    SrgbGamma,
}

/// Numpy-style broadcast of two shapes (right-aligned, size-1 dims stretch).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return dim_err(format!("shapes {:?} and {:?} do not broadcast", a, b)),
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside the broadcast `out` shape; broadcast
/// dimensions get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let o = i + rank - shape.len();
        strides[o] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Calls `f(out_index, a_index, b_index)` for every output element in order.
fn for_each_pair(a: &[usize], b: &[usize], out: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if na == n && nb == n {
        (0..n).for_each(|i| f(i, i, i));
        return;
    }
    if na == n && nb == 1 {
        (0..n).for_each(|i| f(i, i, 0));
        return;
    }
    if na == 1 && nb == n {
        (0..n).for_each(|i| f(i, 0, i));
        return;
    }
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for i in 0..n {
        f(i, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn guard<T: Real>(v: T) -> T {
    let eps = T::from_f64(GUARD_EPS);
    if v.abs() < eps {
        if v < T::ZERO {
            -eps
        } else {
            eps
        }
    } else {
        v
    }
}

fn is_integer(v: f64) -> bool {
    v.fract() == 0.0
}

fn binary_value<T: Real>(kind: BinaryOp, x: T, y: T, mode: Mode) -> T {
    match kind {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => match mode {
            Mode::Strict => x / y,
            Mode::Train => x / guard(y),
        },
        BinaryOp::Pow => {
            if x < T::ZERO && !is_integer(y.to_f64()) {
                T::from_f64(GUARD_EPS).powf(y)
            } else if is_integer(y.to_f64()) && y.to_f64().abs() < 64.0 {
                T::from_f64(x.to_f64().powi(y.to_f64() as i32))
            } else {
                x.powf(y)
            }
        }
        BinaryOp::Max => {
            if x >= y {
                x
            } else {
                y
            }
        }
        BinaryOp::Min => {
            if x <= y {
                x
            } else {
                y
            }
        }
    }
}

/// Partial derivatives (∂z/∂x, ∂z/∂y) at one element.
fn binary_partials<T: Real>(kind: BinaryOp, x: T, y: T, z: T, mode: Mode) -> (T, T) {
    match kind {
        BinaryOp::Add => (T::ONE, T::ONE),
        BinaryOp::Sub => (T::ONE, -T::ONE),
        BinaryOp::Mul => (y, x),
        BinaryOp::Div => {
            let d = match mode {
                Mode::Strict => y,
                Mode::Train => guard(y),
            };
            (T::ONE / d, -x / (d * d))
        }
        BinaryOp::Pow => {
            let dx = if y == T::ZERO {
                T::ZERO
            } else {
                y * binary_value(BinaryOp::Pow, x, y - T::ONE, mode)
            };
            let dy = if x > T::ZERO { z * x.ln() } else { T::ZERO };
            (dx, dy)
        }
        BinaryOp::Max => {
            if x >= y {
                (T::ONE, T::ZERO)
            } else {
                (T::ZERO, T::ONE)
            }
        }
        BinaryOp::Min => {
            if x <= y {
                (T::ONE, T::ZERO)
            } else {
                (T::ZERO, T::ONE)
            }
        }
    }
}

/// Applies `kind` elementwise with broadcasting.
pub fn elementwise<'t, T: Real>(kind: BinaryOp, a: Tensor<'t, T>, b: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
    a.same_tape(&b)?;
    let tape = a.tape;
    let (sa, sb) = (a.shape(), b.shape());
    let out_shape = broadcast_shape(&sa, &sb)?;
    let (va, vb) = (a.value(), b.value());
    let mode = tape.mode();

    if mode == Mode::Strict {
        match kind {
            BinaryOp::Div if vb.iter().any(|v| *v == T::ZERO) => {
                return Err(Error::Domain("division by zero".into()));
            }
            BinaryOp::Pow => {
                let mut bad = false;
                for_each_pair(&sa, &sb, &out_shape, |_, ia, ib| {
                    bad |= va[ia] < T::ZERO && !is_integer(vb[ib].to_f64());
                });
                if bad {
                    return Err(Error::Domain("fractional power of a negative base".into()));
                }
            }
            _ => {}
        }
    }

    let n: usize = out_shape.iter().product();
    let mut out = vec![T::ZERO; n];
    for_each_pair(&sa, &sb, &out_shape, |i, ia, ib| {
        out[i] = binary_value(kind, va[ia], vb[ib], mode);
    });
    let rg = a.requires_grad() || b.requires_grad();
    Ok(tape.push(out_shape, out, Op::Binary { kind, a: a.id, b: b.id }, rg))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn binary_backward<T: Real>(
    kind: BinaryOp,
    a: NodeId,
    b: NodeId,
    out_shape: &[usize],
    out: &[T],
    g: &[T],
    sink: &mut GradSink<'_, T>,
    mode: Mode,
) {
    let (wa, wb) = (sink.wants(a), sink.wants(b));
    let (sa, sb) = (sink.shape(a), sink.shape(b));
    let (va, vb) = (sink.value(a), sink.value(b));
    let mut ga = wa.then(|| vec![T::ZERO; va.len()]);
    let mut gb = wb.then(|| vec![T::ZERO; vb.len()]);
    for_each_pair(sa, sb, out_shape, |i, ia, ib| {
        let (dx, dy) = binary_partials(kind, va[ia], vb[ib], out[i], mode);
        if let Some(ga) = ga.as_mut() {
            ga[ia] += g[i] * dx;
        }
        if let Some(gb) = gb.as_mut() {
            gb[ib] += g[i] * dy;
        }
    });
    if let Some(ga) = ga {
        sink.slot(a).iter_mut().zip(&ga).for_each(|(s, v)| *s += *v);
    }
    if let Some(gb) = gb {
        sink.slot(b).iter_mut().zip(&gb).for_each(|(s, v)| *s += *v);
    }
}

const SRGB_KNEE: f64 = 0.0031308;

fn srgb_encode(x: f64) -> f64 {
    if x <= SRGB_KNEE {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

fn srgb_slope(x: f64) -> f64 {
    if x <= SRGB_KNEE {
        12.92
    } else {
        1.055 / 2.4 * x.powf(1.0 / 2.4 - 1.0)
    }
}

/// Standard sRGB transfer function for a scalar.
pub fn srgb_gamma_scalar(x: f64) -> f64 {
    srgb_encode(x)
}

/// Derivative of the sRGB transfer function for a scalar.
pub fn srgb_gamma_slope(x: f64) -> f64 {
    srgb_slope(x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unary_value<T: Real>(kind: UnaryOp, x: T, mode: Mode) -> T {
    let eps = T::from_f64(GUARD_EPS);
    match kind {
        UnaryOp::Neg => -x,
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => match mode {
            Mode::Strict => x.ln(),
            Mode::Train => x.max(eps).ln(),
        },
        UnaryOp::Sqrt => x.max(T::ZERO).sqrt(),
        UnaryOp::Abs => x.abs(),
        UnaryOp::Square => x * x,
        UnaryOp::Sigmoid => T::from_f64(sigmoid(x.to_f64())),
        UnaryOp::Relu => x.max(T::ZERO),
        UnaryOp::LeakyRelu(s) => {
            if x > T::ZERO {
                x
            } else {
                x * T::from_f64(s)
            }
        }
        UnaryOp::Clamp01 => x.max(T::ZERO).min(T::ONE),
        UnaryOp::SrgbGamma => T::from_f64(srgb_encode(x.to_f64().clamp(0.0, 1.0))),
    }
}

fn unary_derivative<T: Real>(kind: UnaryOp, x: T, z: T, mode: Mode) -> T {
    let eps = T::from_f64(GUARD_EPS);
    match kind {
        UnaryOp::Neg => -T::ONE,
        UnaryOp::Exp => z,
        UnaryOp::Log => match mode {
            Mode::Strict => T::ONE / x,
            Mode::Train => T::ONE / x.max(eps),
        },
        UnaryOp::Sqrt => T::from_f64(0.5) / x.max(eps).sqrt(),
        UnaryOp::Abs => {
            if x > T::ZERO {
                T::ONE
            } else if x < T::ZERO {
                -T::ONE
            } else {
                T::ZERO
            }
        }
        UnaryOp::Square => T::from_f64(2.0) * x,
        UnaryOp::Sigmoid => z * (T::ONE - z),
        UnaryOp::Relu => {
            if x > T::ZERO {
                T::ONE
            } else {
                T::ZERO
            }
        }
        UnaryOp::LeakyRelu(s) => {
            if x > T::ZERO {
                T::ONE
            } else {
                T::from_f64(s)
            }
        }
        // Pass-through on the closed interval, zero strictly outside.
        UnaryOp::Clamp01 => {
            if x >= T::ZERO && x <= T::ONE {
                T::ONE
            } else {
                T::ZERO
            }
        }
        UnaryOp::SrgbGamma => {
            let xv = x.to_f64();
            if (0.0..=1.0).contains(&xv) {
                T::from_f64(srgb_slope(xv))
            } else {
                T::ZERO
            }
        }
    }
}

pub fn unary<'t, T: Real>(kind: UnaryOp, x: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
    let tape = x.tape;
    let mode = tape.mode();
    let v = x.value();
    if mode == Mode::Strict {
        match kind {
            UnaryOp::Log if v.iter().any(|e| *e <= T::ZERO) => {
                return Err(Error::Domain("log of a non-positive value".into()));
            }
            UnaryOp::Sqrt if v.iter().any(|e| *e < T::ZERO) => {
                return Err(Error::Domain("sqrt of a negative value".into()));
            }
            _ => {}
        }
    }
    let out: Vec<T> = v.iter().map(|e| unary_value(kind, *e, mode)).collect();
    Ok(tape.push(x.shape(), out, Op::Unary { kind, x: x.id }, x.requires_grad()))
}

pub(crate) fn unary_backward<T: Real>(
    kind: UnaryOp,
    x: NodeId,
    out: &[T],
    g: &[T],
    sink: &mut GradSink<'_, T>,
    mode: Mode,
) {
    if !sink.wants(x) {
        return;
    }
    let xv = sink.value(x);
    let slot = sink.slot(x);
    for i in 0..g.len() {
        slot[i] += g[i] * unary_derivative(kind, xv[i], out[i], mode);
    }
}

impl<'t, T: Real> Tensor<'t, T> {
    pub fn add(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Add, self, o)
    }
    pub fn sub(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Sub, self, o)
    }
    pub fn mul(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Mul, self, o)
    }
    pub fn div(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Div, self, o)
    }
    pub fn pow(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Pow, self, o)
    }
    pub fn maximum(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Max, self, o)
    }
    pub fn minimum(self, o: Tensor<'t, T>) -> Result<Self> {
        elementwise(BinaryOp::Min, self, o)
    }
    pub fn add_scalar(self, c: f64) -> Result<Self> {
        self.add(self.tape.scalar(c))
    }
    pub fn mul_scalar(self, c: f64) -> Result<Self> {
        self.mul(self.tape.scalar(c))
    }
    /// `c - self`.
    pub fn rsub_scalar(self, c: f64) -> Result<Self> {
        self.tape.scalar(c).sub(self)
    }
    pub fn neg(self) -> Result<Self> {
        unary(UnaryOp::Neg, self)
    }
    pub fn exp(self) -> Result<Self> {
        unary(UnaryOp::Exp, self)
    }
    pub fn ln(self) -> Result<Self> {
        unary(UnaryOp::Log, self)
    }
    pub fn sqrt(self) -> Result<Self> {
        unary(UnaryOp::Sqrt, self)
    }
    pub fn abs(self) -> Result<Self> {
        unary(UnaryOp::Abs, self)
    }
    pub fn square(self) -> Result<Self> {
        unary(UnaryOp::Square, self)
    }
    pub fn sigmoid(self) -> Result<Self> {
        unary(UnaryOp::Sigmoid, self)
    }
    pub fn relu(self) -> Result<Self> {
        unary(UnaryOp::Relu, self)
    }
    pub fn leaky_relu(self, slope: f64) -> Result<Self> {
        unary(UnaryOp::LeakyRelu(slope), self)
    }
    pub fn clamp01(self) -> Result<Self> {
        unary(UnaryOp::Clamp01, self)
    }
    pub fn srgb_gamma(self) -> Result<Self> {
        unary(UnaryOp::SrgbGamma, self)
    }
}
