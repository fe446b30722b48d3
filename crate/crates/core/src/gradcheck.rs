//! Central finite-difference checks of tape gradients.

pub mod suite;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;

/// Step used by every check unless a caller overrides it.
pub const FD_STEP: f64 = 1e-5;

/// Lower bound on the relative-error denominator. Gradient entries smaller
/// than this are compared in absolute terms: for losses of order 10, central
/// differences at `FD_STEP` carry about 1e-10 of rounding noise, which would
/// dominate the relative error of entries near 1e-6.
pub const REL_ERR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Location of the worst entry, e.g. `decoder.W_p[17]`.
    pub worst: Option<String>,
}

impl GradReport {
    fn record(&mut self, analytic: f64, numeric: f64, location: impl FnOnce() -> String) {
        let err = rel_err(analytic, numeric);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst = Some(location());
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Checks `∂f/∂inputs` for a scalar function of free tensors.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradReport>
where
    F: for<'a> Fn(&'a Tape, &[Var<'a>]) -> Result<Var<'a>>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = values.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    f(&tape, &vars)?.backward()?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| v.grad().expect("leaf grad")).collect();

    let mut report = GradReport::default();
    let mut work = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            report.record(grad.data()[j], (plus - minus) / (2.0 * h), || {
                format!("input{i}[{j}]")
            });
        }
    }
    Ok(report)
}

/// Checks `∂loss/∂θ` for every entry of the selected parameters of `store`.
/// `select` filters by parameter name.
pub fn check_params<F>(
    store: &ParamStore,
    h: f64,
    select: impl Fn(&str) -> bool,
    loss: F,
) -> Result<GradReport>
where
    F: for<'a> Fn(&Bound<'a>) -> Result<Var<'a>>,
{
    let tape = Tape::new();
    let bound = store.bind(&tape, true);
    loss(&bound)?.backward()?;
    let grads = bound.grads();

    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let bound = s.bind(&tape, false);
        Ok(loss(&bound)?.item())
    };

    let mut report = GradReport::default();
    let mut work = store.clone();
    for id in store.ids() {
        let name = store.name(id).to_string();
        if !select(&name) {
            continue;
        }
        for j in 0..store.get(id).len() {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            report.record(grads.get(id)[j], (plus - minus) / (2.0 * h), || {
                format!("{name}[{j}]")
            });
        }
    }
    Ok(report)
}
