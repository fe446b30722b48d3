//! LSTM decoder with a configurable context head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aoa::{aoa_gate_traced, AoAParams};
use crate::attention::{multi_head, AttentionTrace};
use crate::autograd::{concat_cols, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

use super::config::{ContextScheme, ModelConfig};
use super::lstm::{lstm_cell, LstmParams};

/// How `c_t` is formed from the LSTM output `h_t` and the attended
/// features `â_t`.
#[derive(Clone, Debug, PartialEq)]
pub enum ContextHead {
    Linear { w: ParamId, b: ParamId },
    Lstm(LstmParams),
    Aoa(AoAParams),
    LstmAoa { lstm: LstmParams, aoa: AoAParams },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// Word embeddings, `E×|Σ|`; column `w` embeds token `w`.
    pub w_e: ParamId,
    pub lstm: LstmParams,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub head: ContextHead,
    /// Output projection, `D×|Σ|`.
    pub w_p: ParamId,
    pub heads: usize,
    pub dim: usize,
    pub vocab_size: usize,
}

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let (d, e, v) = (cfg.dim, cfg.embed_dim, cfg.vocab_size);
        let sq = 1.0 / (d as f64).sqrt();
        let w_e = store.add(
            "decoder.W_e",
            Tensor::uniform(&[e, v], 1.0 / (e as f64).sqrt(), rng),
        );
        let lstm = LstmParams::init(store, "decoder.lstm", e + d, d, rng);
        let w_q = store.add("decoder.att.W_Qd", Tensor::uniform(&[d, d], sq, rng));
        let w_k = store.add("decoder.att.W_Kd", Tensor::uniform(&[d, d], sq, rng));
        let w_v = store.add("decoder.att.W_Vd", Tensor::uniform(&[d, d], sq, rng));
        let head = match cfg.decoder {
            ContextScheme::Base => ContextHead::Linear {
                w: store.add(
                    "decoder.ctx.W",
                    Tensor::uniform(&[d, 2 * d], 1.0 / ((2 * d) as f64).sqrt(), rng),
                ),
                b: store.add("decoder.ctx.b", Tensor::zeros(&[d])),
            },
            ContextScheme::Lstm => {
                ContextHead::Lstm(LstmParams::init(store, "decoder.ctx.lstm", 2 * d, d, rng))
            }
            ContextScheme::Aoa => ContextHead::Aoa(AoAParams::init(store, "decoder.ctx.aoa", d, rng)),
            ContextScheme::LstmAoa => ContextHead::LstmAoa {
                lstm: LstmParams::init(store, "decoder.ctx.lstm", 2 * d, d, rng),
                aoa: AoAParams::init(store, "decoder.ctx.aoa", d, rng),
            },
        };
        let w_p = store.add("decoder.W_p", Tensor::uniform(&[d, v], sq, rng));
        DecoderParams {
            w_e,
            lstm,
            w_q,
            w_k,
            w_v,
            head,
            w_p,
            heads: cfg.dec_heads,
            dim: d,
            vocab_size: v,
        }
    }

    fn has_ctx_state(&self) -> bool {
        matches!(self.head, ContextHead::Lstm(_) | ContextHead::LstmAoa { .. })
    }
}

/// Per-image quantities shared by every decoding step.
#[derive(Clone, Copy)]
pub struct ImageContext<'t> {
    /// Encoded features `A`, `k×D`.
    pub feats: Var<'t>,
    /// Mean-pooled features `ā`, `1×D`.
    pub mean: Var<'t>,
    pub keys: Var<'t>,
    pub values: Var<'t>,
}

pub fn prepare<'t>(bound: &Bound<'t>, dec: &DecoderParams, feats: Var<'t>) -> Result<ImageContext<'t>> {
    Ok(ImageContext {
        feats,
        mean: feats.mean_rows()?,
        keys: feats.matmul_t(bound[dec.w_k])?,
        values: feats.matmul_t(bound[dec.w_v])?,
    })
}

/// Recurrent state threaded between steps. All vectors are `1×D` rows.
#[derive(Clone, Copy)]
pub struct DecoderState<'t> {
    pub h: Var<'t>,
    pub m: Var<'t>,
    /// Context vector of the previous step; zeros before the first.
    pub c_prev: Var<'t>,
    /// Hidden and cell state of the context LSTM, when the head has one.
    pub ctx: Option<(Var<'t>, Var<'t>)>,
    pub t: usize,
}

/// Plain-value copy of a [`DecoderState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub h: Vec<f64>,
    pub m: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub ctx_h: Option<Vec<f64>>,
    pub ctx_m: Option<Vec<f64>>,
    pub t: usize,
}

impl<'t> DecoderState<'t> {
    pub fn initial(tape: &'t Tape, dec: &DecoderParams) -> Self {
        let zero = || tape.constant(Tensor::row(vec![0.0; dec.dim]));
        DecoderState {
            h: zero(),
            m: zero(),
            c_prev: zero(),
            ctx: dec.has_ctx_state().then(|| (zero(), zero())),
            t: 0,
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let v = |x: &Var<'_>| x.value().into_data();
        StateSnapshot {
            h: v(&self.h),
            m: v(&self.m),
            c_prev: v(&self.c_prev),
            ctx_h: self.ctx.as_ref().map(|(h, _)| v(h)),
            ctx_m: self.ctx.as_ref().map(|(_, m)| v(m)),
            t: self.t,
        }
    }

    /// Restores a snapshot as constants on `tape`.
    pub fn restore(tape: &'t Tape, s: &StateSnapshot) -> Self {
        let c = |x: &Vec<f64>| tape.constant(Tensor::row(x.clone()));
        DecoderState {
            h: c(&s.h),
            m: c(&s.m),
            c_prev: c(&s.c_prev),
            ctx: s.ctx_h.as_ref().zip(s.ctx_m.as_ref()).map(|(h, m)| (c(h), c(m))),
            t: s.t,
        }
    }
}

pub struct StepOutput<'t> {
    /// Unnormalised scores, `1×|Σ|`.
    pub logits: Var<'t>,
    pub state: DecoderState<'t>,
    pub trace: AttentionTrace,
    /// AoA gate activations, for heads that have one.
    pub gate: Option<Var<'t>>,
}

/// One decoding step fed with the previous token `word`.
pub fn decoder_step<'t>(
    bound: &Bound<'t>,
    dec: &DecoderParams,
    state: &DecoderState<'t>,
    word: usize,
    img: &ImageContext<'t>,
) -> Result<StepOutput<'t>> {
    if word >= dec.vocab_size {
        return Err(Error::Contract(format!(
            "token {word} outside vocabulary of {}",
            dec.vocab_size
        )));
    }
    let embed = bound[dec.w_e].column(word)?;
    let visual = img.mean.add(state.c_prev)?;
    let x = concat_cols(&[embed, visual])?;
    let (h, m) = lstm_cell(bound, &dec.lstm, x, state.h, state.m)?;

    let q = h.matmul_t(bound[dec.w_q])?;
    let (attended, trace) = multi_head(q, img.keys, img.values, dec.heads)?;

    let mut ctx = None;
    let mut gate = None;
    let c = match &dec.head {
        ContextHead::Linear { w, b } => concat_cols(&[h, attended])?
            .matmul_t(bound[*w])?
            .add_row(bound[*b])?,
        ContextHead::Lstm(p) => {
            let (ch, cm) = state.ctx.expect("context LSTM state");
            let (ch, cm) = lstm_cell(bound, p, concat_cols(&[h, attended])?, ch, cm)?;
            ctx = Some((ch, cm));
            ch
        }
        ContextHead::Aoa(p) => {
            let out = aoa_gate_traced(bound, p, q, attended)?;
            gate = Some(out.gate);
            out.output
        }
        ContextHead::LstmAoa { lstm, aoa } => {
            let (ch, cm) = state.ctx.expect("context LSTM state");
            let (ch, cm) = lstm_cell(bound, lstm, concat_cols(&[h, attended])?, ch, cm)?;
            ctx = Some((ch, cm));
            let out = aoa_gate_traced(bound, aoa, q, ch)?;
            gate = Some(out.gate);
            out.output
        }
    };
    let logits = c.matmul(bound[dec.w_p])?;
    Ok(StepOutput {
        logits,
        state: DecoderState {
            h,
            m,
            c_prev: c,
            ctx,
            t: state.t + 1,
        },
        trace,
        gate,
    })
}
