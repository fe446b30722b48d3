use rand::Rng;

use crate::autograd::Var;
use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Four-gate LSTM cell. Gate blocks are ordered input, forget, output,
/// candidate along the `4H` axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    /// Weights from `uniform(±1/√fan_in)`; forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_x = store.add(
            format!("{prefix}.W_x"),
            Tensor::uniform(&[4 * hidden, input], 1.0 / (input as f64).sqrt(), rng),
        );
        let w_h = store.add(
            format!("{prefix}.W_h"),
            Tensor::uniform(&[4 * hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng),
        );
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{prefix}.b"), Tensor::vector(bias));
        LstmParams { w_x, w_h, b, hidden }
    }
}

/// One step: returns the new `(h, m)`.
pub fn lstm_cell<'t>(
    bound: &Bound<'t>,
    p: &LstmParams,
    x: Var<'t>,
    h: Var<'t>,
    m: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let gates = x
        .matmul_t(bound[p.w_x])?
        .add(h.matmul_t(bound[p.w_h])?)?
        .add_row(bound[p.b])?;
    let g = gates.split_cols(4)?;
    let input = g[0].sigmoid();
    let forget = g[1].sigmoid();
    let output = g[2].sigmoid();
    let candidate = g[3].tanh();
    let m_next = forget.mul(m)?.add(input.mul(candidate)?)?;
    let h_next = output.mul(m_next.tanh())?;
    Ok((h_next, m_next))
}
