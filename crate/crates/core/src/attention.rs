//! Scaled dot-product and multi-head attention.
//!
//! Projections of queries, keys and values are the caller's business; these
//! functions only compute `softmax(QKᵀ/√d)·V`, optionally per column slice.

use serde::Serialize;

use crate::autograd::{concat_cols, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Attention weights recorded during a forward pass, one `n_q×n_k` matrix
/// per head. Every row sums to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionTrace {
    pub heads: Vec<Vec<Vec<f64>>>,
}

impl AttentionTrace {
    fn from_weights(weights: &[Tensor]) -> Self {
        AttentionTrace {
            heads: weights
                .iter()
                .map(|w| (0..w.rows()).map(|r| w.row_slice(r).to_vec()).collect())
                .collect(),
        }
    }

    /// Head-averaged weights for query row `q`.
    pub fn mean_over_heads(&self, q: usize) -> Vec<f64> {
        let n = self.heads[0][q].len();
        let mut out = vec![0.0; n];
        for head in &self.heads {
            out.iter_mut().zip(&head[q]).for_each(|(o, w)| *o += w);
        }
        let h = self.heads.len() as f64;
        out.iter_mut().for_each(|o| *o /= h);
        out
    }
}

fn check_qkv(q: &Var<'_>, k: &Var<'_>, v: &Var<'_>) -> Result<()> {
    let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
    let qc = q.with_value(|t| t.cols());
    let (kr, kc) = k.with_value(|t| t.dims2());
    let (vr, _) = v.with_value(|t| t.dims2());
    if qc != kc {
        return Err(Error::dim("attention(Q,K)", &qs, &ks));
    }
    if kr != vr {
        return Err(Error::dim("attention(K,V)", &ks, &vs));
    }
    Ok(())
}

fn dot_attention_weights<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    check_qkv(&q, &k, &v)?;
    let d = q.with_value(|t| t.cols()) as f64;
    let weights = q.matmul_t(k)?.scale(1.0 / d.sqrt()).softmax_rows();
    Ok((weights.matmul(v)?, weights))
}

/// `softmax(QKᵀ/√d)·V` with `d` the column count of `Q`.
pub fn dot_attention<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<(Var<'t>, AttentionTrace)> {
    let (out, w) = dot_attention_weights(q, k, v)?;
    Ok((out, AttentionTrace::from_weights(&[w.value()])))
}

/// Splits `Q`, `K`, `V` into `heads` column slices, attends within each and
/// concatenates the results. No output projection follows the concatenation.
pub fn multi_head<'t>(
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    heads: usize,
) -> Result<(Var<'t>, AttentionTrace)> {
    check_qkv(&q, &k, &v)?;
    let width = q.with_value(|t| t.cols());
    let vwidth = v.with_value(|t| t.cols());
    if heads == 0 || !width.is_multiple_of(heads) || !vwidth.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "model width {width} is not divisible by {heads} heads"
        )));
    }
    if heads == 1 {
        return dot_attention(q, k, v);
    }
    let (qs, ks, vs) = (q.split_cols(heads)?, k.split_cols(heads)?, v.split_cols(heads)?);
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (o, w) = dot_attention_weights(qs[h], ks[h], vs[h])?;
        outs.push(o);
        weights.push(w.value());
    }
    Ok((concat_cols(&outs)?, AttentionTrace::from_weights(&weights)))
}
