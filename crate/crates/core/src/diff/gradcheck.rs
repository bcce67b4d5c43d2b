//! Central finite-difference checks of tape gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / (|analytic| + eps)` over all coordinates.
    pub max_rel_err: f64,
    /// Coordinate of the worst error, as (input index, flat offset).
    pub worst: (usize, usize),
    /// Coordinates where either estimate was not finite.
    pub nan_count: usize,
    pub coords: usize,
}

pub const DEFAULT_EPS: f64 = 1e-6;

/// Checks `f` at a single input.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        h,
        DEFAULT_EPS,
    )
}

/// Checks a scalar function of several inputs. `f` receives one leaf per
/// input tensor, in order, and must return a scalar.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], h: f64, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(xs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        nan_count: 0,
        coords: 0,
    };
    let mut work: Vec<Tensor> = xs.to_vec();
    for (i, grads) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            report.coords += 1;
            if !numeric.is_finite() || !grads[j].is_finite() {
                report.nan_count += 1;
                continue;
            }
            let rel = (grads[j] - numeric).abs() / (grads[j].abs() + eps);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

/// Compares `analytic` gradients (one tensor per parameter, store order)
/// with central differences of `loss` over every parameter scalar.
pub fn grad_check_params<F>(
    store: &ParamStore,
    analytic: &[Tensor],
    loss: F,
    h: f64,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        nan_count: 0,
        coords: 0,
    };
    let mut work = store.clone();
    for (i, grads) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = work.values()[i].data()[j];
            work.values_mut()[i].data_mut()[j] = orig + h;
            let up = loss(&work)?;
            work.values_mut()[i].data_mut()[j] = orig - h;
            let down = loss(&work)?;
            work.values_mut()[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads.data()[j];
            report.coords += 1;
            if !numeric.is_finite() || !a.is_finite() {
                report.nan_count += 1;
                continue;
            }
            let rel = (a - numeric).abs() / (a.abs() + eps);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}
