//! The AoA gate.
//!
//! From a query `q` and an attention result `v̂` the module forms an
//! information vector `i = q·W_i_qᵀ + v̂·W_i_vᵀ + b_i` and a gate
//! `g = σ(q·W_g_qᵀ + v̂·W_g_vᵀ + b_g)`, and returns `g ⊙ i`.

use rand::Rng;

use crate::attention::AttentionTrace;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

/// The six learnables of one AoA block. All matrices are `D×D`, biases `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct AoAParams {
    pub w_i_q: ParamId,
    pub w_i_v: ParamId,
    pub b_i: ParamId,
    pub w_g_q: ParamId,
    pub w_g_v: ParamId,
    pub b_g: ParamId,
}

impl AoAParams {
    /// Registers `{prefix}.W_i_q`, … with matrices drawn from
    /// `uniform(−1/√D, 1/√D)` and zero biases.
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut mat = |name: &str, rng: &mut R| {
            store.add(format!("{prefix}.{name}"), Tensor::uniform(&[d, d], bound, rng))
        };
        let w_i_q = mat("W_i_q", rng);
        let w_i_v = mat("W_i_v", rng);
        let w_g_q = mat("W_g_q", rng);
        let w_g_v = mat("W_g_v", rng);
        let b_i = store.add(format!("{prefix}.b_i"), Tensor::zeros(&[d]));
        let b_g = store.add(format!("{prefix}.b_g"), Tensor::zeros(&[d]));
        AoAParams {
            w_i_q,
            w_i_v,
            b_i,
            w_g_q,
            w_g_v,
            b_g,
        }
    }

    pub fn ids(&self) -> [ParamId; 6] {
        [self.w_i_q, self.w_i_v, self.b_i, self.w_g_q, self.w_g_v, self.b_g]
    }
}

/// Gated output together with the gate activations.
pub struct GatedOutput<'t> {
    pub output: Var<'t>,
    pub gate: Var<'t>,
}

/// The split form: gate an already-computed attention result `v_hat`.
pub fn aoa_gate<'t>(bound: &Bound<'t>, p: &AoAParams, q: Var<'t>, v_hat: Var<'t>) -> Result<Var<'t>> {
    Ok(aoa_gate_traced(bound, p, q, v_hat)?.output)
}

pub fn aoa_gate_traced<'t>(
    bound: &Bound<'t>,
    p: &AoAParams,
    q: Var<'t>,
    v_hat: Var<'t>,
) -> Result<GatedOutput<'t>> {
    if q.shape() != v_hat.shape() {
        return Err(Error::dim("aoa_gate", &q.shape(), &v_hat.shape()));
    }
    let info = q
        .matmul_t(bound[p.w_i_q])?
        .add(v_hat.matmul_t(bound[p.w_i_v])?)?
        .add_row(bound[p.b_i])?;
    let gate = q
        .matmul_t(bound[p.w_g_q])?
        .add(v_hat.matmul_t(bound[p.w_g_v])?)?
        .add_row(bound[p.b_g])?
        .sigmoid();
    Ok(GatedOutput {
        output: gate.mul(info)?,
        gate,
    })
}

/// The composed form: evaluates `att(Q, K, V)` once and gates the result
/// against `Q`.
pub fn aoa<'t, F>(
    bound: &Bound<'t>,
    p: &AoAParams,
    att: F,
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
) -> Result<(GatedOutput<'t>, AttentionTrace)>
where
    F: FnOnce(Var<'t>, Var<'t>, Var<'t>) -> Result<(Var<'t>, AttentionTrace)>,
{
    let (v_hat, trace) = att(q, k, v)?;
    Ok((aoa_gate_traced(bound, p, q, v_hat)?, trace))
}
