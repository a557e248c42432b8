//! Scalar reductions: compensated (Neumaier) sums in fixed left-to-right
//! order.

use super::real::Real;
use super::tape::{GradSink, NodeId, Op, Tensor};
use crate::error::{dim_err, Result};

/// Neumaier's compensated sum.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let (mut s, mut c) = (T::ZERO, T::ZERO);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn sum<'t, T: Real>(x: Tensor<'t, T>) -> Tensor<'t, T> {
    let s = compensated_sum(x.value().iter().copied());
    x.tape.push(Vec::new(), vec![s], Op::Sum { x: x.id }, x.requires_grad())
}

pub fn mean<'t, T: Real>(x: Tensor<'t, T>) -> Tensor<'t, T> {
    let v = x.value();
    let s = compensated_sum(v.iter().copied()) / T::from_f64(v.len() as f64);
    x.tape.push(Vec::new(), vec![s], Op::Mean { x: x.id }, x.requires_grad())
}

/// Mean of |a − b| over all elements.
pub fn reduce_mean_abs<'t, T: Real>(a: Tensor<'t, T>, b: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
    a.same_tape(&b)?;
    if a.shape() != b.shape() {
        return dim_err(format!("mean_abs: shapes {:?} and {:?} differ", a.shape(), b.shape()));
    }
    let (va, vb) = (a.value(), b.value());
    let s = compensated_sum(va.iter().zip(vb.iter()).map(|(x, y)| (*x - *y).abs()));
    let m = s / T::from_f64(va.len() as f64);
    let rg = a.requires_grad() || b.requires_grad();
    Ok(a.tape.push(Vec::new(), vec![m], Op::MeanAbsDiff { a: a.id, b: b.id }, rg))
}

pub(crate) fn sum_backward<T: Real>(x: NodeId, g: T, scale: f64, sink: &mut GradSink<'_, T>) {
    if sink.wants(x) {
        let d = g * T::from_f64(scale);
        sink.slot(x).iter_mut().for_each(|v| *v += d);
    }
}

pub(crate) fn mean_abs_diff_backward<T: Real>(a: NodeId, b: NodeId, g: T, sink: &mut GradSink<'_, T>) {
    let (va, vb) = (sink.value(a), sink.value(b));
    let scale = g / T::from_f64(va.len() as f64);
    let sign = |x: T, y: T| {
        if x > y {
            scale
        } else if x < y {
            -scale
        } else {
            T::ZERO
        }
    };
    if sink.wants(a) {
        let ga = sink.slot(a);
        for i in 0..va.len() {
            ga[i] += sign(va[i], vb[i]);
        }
    }
    if sink.wants(b) {
        let gb = sink.slot(b);
        for i in 0..va.len() {
            gb[i] -= sign(va[i], vb[i]);
        }
    }
}

impl<'t, T: Real> Tensor<'t, T> {
    pub fn sum(self) -> Self {
        sum(self)
    }
    pub fn mean(self) -> Self {
        mean(self)
    }
}
