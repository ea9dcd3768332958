//! Central finite-difference gradient checking.
//!
//! The numerical side only evaluates the forward closure on perturbed
//! inputs, so it stays independent of [`Tape::backward`].

use super::{Binding, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of a gradient check over all input scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares tape gradients of `f` with central differences of step `h`.
///
/// `f` receives the tape and one leaf per input and must return a scalar.
/// The relative error per scalar is `|a - n| / max(|a| + |n|, REL_FLOOR)`.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for k in 0..inputs.len() {
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k][j];
            let abs = (a - numeric).abs();
            let rel = abs / (a.abs() + numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Gradient check over every parameter of `store` plus `extra` inputs.
///
/// `f` receives a binding for the parameters and one var per extra input.
pub fn check_params<F>(store: &ParamStore, extra: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &Binding, &[Var]) -> Result<Var>,
{
    let np = store.len();
    let mut inputs: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
    inputs.extend_from_slice(extra);
    check(&inputs, h, |tape, vars| {
        let b = Binding::from_vars(vars[..np].to_vec());
        f(tape, &b, &vars[np..])
    })
}
