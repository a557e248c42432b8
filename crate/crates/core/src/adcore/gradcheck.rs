//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Tensor};
use crate::array::Array;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Default finite-difference step at 64-bit precision.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor for relative error.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, element index) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// Autodiff and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Relative discrepancy between an autodiff gradient and its numerical
/// estimate, with denominator `max(|autodiff|, REL_FLOOR)`.
pub fn relative_error(autodiff: f64, numeric: f64) -> f64 {
    (autodiff - numeric).abs() / autodiff.abs().max(REL_FLOOR)
}

fn eval_scalar<F>(f: &F, inputs: &[Array<f64>]) -> Result<f64>
where
    F: for<'t> Fn(&[Tensor<'t, f64>]) -> Result<Tensor<'t, f64>>,
{
    let tape = Tape::new();
    let xs: Vec<_> = inputs.iter().map(|a| tape.constant(a)).collect();
    let y = f(&xs)?.item()?;
    if !y.is_finite() {
        return Err(Error::Evaluation(format!("function returned {}", y)));
    }
    Ok(y)
}

/// Checks selected coordinates of several inputs. `coords` holds
/// (input index, element index) pairs; `None` checks every element of every
/// input.
pub fn gradcheck_inputs<F>(
    f: F,
    inputs: &[Array<f64>],
    coords: Option<&[(usize, usize)]>,
    eps: f64,
    exec: Exec,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&[Tensor<'t, f64>]) -> Result<Tensor<'t, f64>> + Sync,
{
    let tape = Tape::new();
    let xs: Vec<_> = inputs.iter().map(|a| tape.param(a)).collect();
    let y = f(&xs)?;
    let yv = y.item()?;
    if !yv.is_finite() {
        return Err(Error::Evaluation(format!("function returned {}", yv)));
    }
    y.backward()?;
    let grads: Vec<Vec<f64>> = xs
        .iter()
        .zip(inputs)
        .map(|(t, a)| t.grad().map(|g| g.into_data()).unwrap_or_else(|| vec![0.0; a.len()]))
        .collect();

    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = inputs
                .iter()
                .enumerate()
                .flat_map(|(i, a)| (0..a.len()).map(move |j| (i, j)))
                .collect();
            &all
        }
    };

    let errors = exec.map(coords, |&(i, j)| -> Result<(f64, f64, f64)> {
        let mut plus = inputs.to_vec();
        plus[i].data_mut()[j] += eps;
        let mut minus = inputs.to_vec();
        minus[i].data_mut()[j] -= eps;
        let numeric = (eval_scalar(&f, &plus)? - eval_scalar(&f, &minus)?) / (2.0 * eps);
        Ok((relative_error(grads[i][j], numeric), grads[i][j], numeric))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: coords.len(),
    };
    for (e, &c) in errors.into_iter().zip(coords) {
        let (e, ad, num) = e?;
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = e;
            report.worst = Some(c);
            report.worst_values = (ad, num);
        }
    }
    Ok(report)
}

/// Max relative error between the autodiff gradient of scalar-valued `f` at
/// `x` and central differences `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε`.
pub fn gradcheck<F>(f: F, x: &Array<f64>, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(Tensor<'t, f64>) -> Result<Tensor<'t, f64>> + Sync,
{
    let report = gradcheck_inputs(|xs| f(xs[0]), std::slice::from_ref(x), None, eps, Exec::Sequential)?;
    Ok(report.max_rel_error)
}
