//! Feature projection and the stacked refiner.

use rand::Rng;

use crate::aoa::{aoa, AoAParams};
use crate::attention::multi_head;
use crate::autograd::{Var, LAYER_NORM_EPS};
use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

use super::config::{EncoderKind, ModelConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardParams {
    pub att_ln_gain: ParamId,
    pub att_ln_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RefinerBlock {
    Aoa {
        aoa: AoAParams,
        ln_gain: ParamId,
        ln_bias: ParamId,
    },
    FeedForward(FeedForwardParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinerLayerParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub heads: usize,
    pub block: RefinerBlock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub layers: Vec<RefinerLayerParams>,
}

fn layer_norm_params(store: &mut ParamStore, prefix: &str, d: usize) -> (ParamId, ParamId) {
    (
        store.add(format!("{prefix}.gain"), Tensor::full(&[d], 1.0)),
        store.add(format!("{prefix}.bias"), Tensor::zeros(&[d])),
    )
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.dim;
        let proj_w = store.add(
            "encoder.proj.W",
            Tensor::uniform(&[d, cfg.feat_dim], 1.0 / (cfg.feat_dim as f64).sqrt(), rng),
        );
        let proj_b = store.add("encoder.proj.b", Tensor::zeros(&[d]));
        let sq = 1.0 / (d as f64).sqrt();
        let layers = (0..cfg.refine_layers())
            .map(|l| {
                let pre = format!("encoder.layer{l}");
                let w_q = store.add(format!("{pre}.W_Qe"), Tensor::uniform(&[d, d], sq, rng));
                let w_k = store.add(format!("{pre}.W_Ke"), Tensor::uniform(&[d, d], sq, rng));
                let w_v = store.add(format!("{pre}.W_Ve"), Tensor::uniform(&[d, d], sq, rng));
                let block = match cfg.encoder {
                    EncoderKind::RefineAoa => {
                        let aoa = AoAParams::init(store, &format!("{pre}.aoa"), d, rng);
                        let (ln_gain, ln_bias) = layer_norm_params(store, &format!("{pre}.ln"), d);
                        RefinerBlock::Aoa {
                            aoa,
                            ln_gain,
                            ln_bias,
                        }
                    }
                    EncoderKind::RefineNoAoa => {
                        let (att_ln_gain, att_ln_bias) =
                            layer_norm_params(store, &format!("{pre}.ln_att"), d);
                        let f = cfg.ff_dim;
                        let w1 = store.add(format!("{pre}.ff.W1"), Tensor::uniform(&[f, d], sq, rng));
                        let b1 = store.add(format!("{pre}.ff.b1"), Tensor::zeros(&[f]));
                        let w2 = store.add(
                            format!("{pre}.ff.W2"),
                            Tensor::uniform(&[d, f], 1.0 / (f as f64).sqrt(), rng),
                        );
                        let b2 = store.add(format!("{pre}.ff.b2"), Tensor::zeros(&[d]));
                        let (ln_gain, ln_bias) = layer_norm_params(store, &format!("{pre}.ln_ff"), d);
                        RefinerBlock::FeedForward(FeedForwardParams {
                            att_ln_gain,
                            att_ln_bias,
                            w1,
                            b1,
                            w2,
                            b2,
                            ln_gain,
                            ln_bias,
                        })
                    }
                    EncoderKind::Base => unreachable!("base encoder has no refiner layers"),
                };
                RefinerLayerParams {
                    w_q,
                    w_k,
                    w_v,
                    heads: cfg.enc_heads,
                    block,
                }
            })
            .collect();
        EncoderParams {
            proj_w,
            proj_b,
            layers,
        }
    }
}

/// Affine map of each raw feature row to model width.
pub fn project_features<'t>(bound: &Bound<'t>, enc: &EncoderParams, raw: Var<'t>) -> Result<Var<'t>> {
    raw.matmul_t(bound[enc.proj_w])?.add_row(bound[enc.proj_b])
}

/// One refiner layer. The AoA variant computes
/// `LayerNorm(A + AoA(mh-att, A·W_Qᵀ, A·W_Kᵀ, A·W_Vᵀ))`; the feed-forward
/// variant follows self-attention with a ReLU MLP, each sublayer wrapped in
/// its own residual connection and layer norm.
pub fn refine_layer<'t>(bound: &Bound<'t>, layer: &RefinerLayerParams, a: Var<'t>) -> Result<Var<'t>> {
    let q = a.matmul_t(bound[layer.w_q])?;
    let k = a.matmul_t(bound[layer.w_k])?;
    let v = a.matmul_t(bound[layer.w_v])?;
    let heads = layer.heads;
    match &layer.block {
        RefinerBlock::Aoa {
            aoa: p,
            ln_gain,
            ln_bias,
        } => {
            let (gated, _) = aoa(bound, p, |q, k, v| multi_head(q, k, v, heads), q, k, v)?;
            a.add(gated.output)?
                .layer_norm(bound[*ln_gain], bound[*ln_bias], LAYER_NORM_EPS)
        }
        RefinerBlock::FeedForward(ff) => {
            let (att, _) = multi_head(q, k, v, heads)?;
            let a1 = a.add(att)?.layer_norm(
                bound[ff.att_ln_gain],
                bound[ff.att_ln_bias],
                LAYER_NORM_EPS,
            )?;
            let hidden = a1.matmul_t(bound[ff.w1])?.add_row(bound[ff.b1])?.relu();
            let out = hidden.matmul_t(bound[ff.w2])?.add_row(bound[ff.b2])?;
            a1.add(out)?
                .layer_norm(bound[ff.ln_gain], bound[ff.ln_bias], LAYER_NORM_EPS)
        }
    }
}

/// Projection followed by every refiner layer in order.
pub fn encode<'t>(bound: &Bound<'t>, enc: &EncoderParams, raw: Var<'t>) -> Result<Var<'t>> {
    let mut a = project_features(bound, enc, raw)?;
    for layer in &enc.layers {
        a = refine_layer(bound, layer, a)?;
    }
    Ok(a)
}
