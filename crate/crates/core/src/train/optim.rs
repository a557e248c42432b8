use crate::adcore::Real;
use crate::array::Array;
use crate::error::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter tensor, kept in f64.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        Self { v: m.clone(), m, step: 0 }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }
}

/// One AdamW update with decoupled weight decay. Nothing is modified when
/// any gradient entry is non-finite.
pub fn adamw_step<'a, T: Real>(
    params: impl IntoIterator<Item = &'a mut Array<T>>,
    grads: &[Array<T>],
    state: &mut OptimizerState,
    lr: f64,
    betas: (f64, f64),
    weight_decay: f64,
) -> Result<()> {
    let params: Vec<&mut Array<T>> = params.into_iter().collect();
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.len() {
            return Err(Error::Dimension(format!(
                "parameter {i}: shape {:?}, gradient {:?}, moments {}",
                p.shape(),
                g.shape(),
                state.m[i].len()
            )));
        }
        if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {i} is {} at element {j} (optimizer step {})",
                g.data()[j],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let (b1, b2) = betas;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    let shrink = 1.0 - lr * weight_decay;
    for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (w, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gj = gj.to_f64();
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let update = (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
            *w = T::from_f64(w.to_f64() * shrink - lr * update);
        }
    }
    Ok(())
}
