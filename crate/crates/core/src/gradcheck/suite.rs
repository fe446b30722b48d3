//! The full finite-difference suite: every differentiable op on small random
//! inputs, the attention and AoA blocks, and the end-to-end caption losses
//! for each encoder/decoder variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{check_inputs, check_params, GradReport, FD_STEP};
use crate::aoa::{aoa_gate, AoAParams};
use crate::attention::{dot_attention, multi_head};
use crate::autograd::{concat_cols, Tape, Var};
use crate::data::vocab::EOS;
use crate::error::Result;
use crate::model::decode::score_tokens;
use crate::model::{CaptionModel, ContextScheme, EncoderKind, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::train::{scst_pseudo_loss, xe_loss};

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Sizes of the end-to-end checks.
pub const DIM: usize = 8;
pub const OBJECTS: usize = 3;
pub const HEADS: usize = 2;
pub const LAYERS: usize = 2;
pub const VOCAB: usize = 12;
pub const SEQ_LEN: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<String>,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, r: GradReport) -> Self {
        CheckResult {
            name: name.into(),
            pass: r.max_rel_err < TOLERANCE,
            checked: r.checked,
            max_rel_err: r.max_rel_err,
            worst: r.worst,
        }
    }
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

/// Entries bounded away from zero, for ops with a kink there.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = rand_t(shape, rng);
    for v in t.data_mut() {
        *v = v.signum() * (0.1 + v.abs());
    }
    t
}

/// Reduces any output to a scalar with fixed random weights so every entry
/// of the output contributes a distinct sensitivity.
fn weigh<'t>(tape: &'t Tape, out: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_t(&out.shape(), &mut rng);
    Ok(out.mul(tape.constant(w))?.sum())
}


fn op_checks(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut run = |name: &str, inputs: Vec<Tensor>, f: &dyn for<'a> Fn(&'a Tape, &[Var<'a>]) -> Result<Var<'a>>| -> Result<()> {
        let r = check_inputs(&inputs, FD_STEP, |t, v| weigh(t, f(t, v)?, 99))?;
        out.push(CheckResult::new(format!("op.{name}"), r));
        Ok(())
    };
    let (m, n, p) = (3, 4, 5);
    run("matmul", vec![rand_t(&[m, n], rng), rand_t(&[n, p], rng)], &|_, v| v[0].matmul(v[1]))?;
    run("matmul_t", vec![rand_t(&[m, n], rng), rand_t(&[p, n], rng)], &|_, v| v[0].matmul_t(v[1]))?;
    run("add", vec![rand_t(&[m, n], rng), rand_t(&[m, n], rng)], &|_, v| v[0].add(v[1]))?;
    run("sub", vec![rand_t(&[m, n], rng), rand_t(&[m, n], rng)], &|_, v| v[0].sub(v[1]))?;
    run("mul", vec![rand_t(&[m, n], rng), rand_t(&[m, n], rng)], &|_, v| v[0].mul(v[1]))?;
    run("mul_scalar", vec![rand_t(&[m, n], rng), rand_t(&[1], rng)], &|_, v| v[0].mul(v[1]))?;
    run("add_row", vec![rand_t(&[m, n], rng), rand_t(&[n], rng)], &|_, v| v[0].add_row(v[1]))?;
    run("scale", vec![rand_t(&[m, n], rng)], &|_, v| Ok(v[0].scale(-1.7)))?;
    run("sigmoid", vec![rand_t(&[m, n], rng)], &|_, v| Ok(v[0].sigmoid()))?;
    run("tanh", vec![rand_t(&[m, n], rng)], &|_, v| Ok(v[0].tanh()))?;
    run("relu", vec![away_from_zero(&[m, n], rng)], &|_, v| Ok(v[0].relu()))?;
    run("softmax_rows", vec![rand_t(&[m, n], rng)], &|_, v| Ok(v[0].softmax_rows()))?;
    run("log_softmax_rows", vec![rand_t(&[m, n], rng)], &|_, v| Ok(v[0].log_softmax_rows()))?;
    run(
        "layer_norm",
        vec![rand_t(&[m, n], rng), rand_t(&[n], rng), rand_t(&[n], rng)],
        &|_, v| v[0].layer_norm(v[1], v[2], 1e-5),
    )?;
    run("slice_cols", vec![rand_t(&[m, n], rng)], &|_, v| v[0].slice_cols(1, 2))?;
    run("split_cols", vec![rand_t(&[m, n], rng)], &|_, v| {
        let parts = v[0].split_cols(2)?;
        parts[1].mul(parts[0])
    })?;
    run("concat_cols", vec![rand_t(&[m, 2], rng), rand_t(&[m, 3], rng)], &|_, v| {
        concat_cols(&[v[0], v[1]])
    })?;
    run("mean_rows", vec![rand_t(&[m, n], rng)], &|_, v| v[0].mean_rows())?;
    run("column", vec![rand_t(&[m, n], rng)], &|_, v| v[0].column(2))?;
    run("pick", vec![rand_t(&[m, n], rng)], &|_, v| v[0].pick(1, 3))?;
    run("sum", vec![rand_t(&[m, n], rng)], &|_, v| Ok(v[0].sum()))?;
    run(
        "dot_attention",
        vec![rand_t(&[2, DIM], rng), rand_t(&[OBJECTS, DIM], rng), rand_t(&[OBJECTS, DIM], rng)],
        &|_, v| Ok(dot_attention(v[0], v[1], v[2])?.0),
    )?;
    run(
        "multi_head",
        vec![rand_t(&[2, DIM], rng), rand_t(&[OBJECTS, DIM], rng), rand_t(&[OBJECTS, DIM], rng)],
        &|_, v| Ok(multi_head(v[0], v[1], v[2], HEADS)?.0),
    )?;
    Ok(out)
}

fn aoa_check(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    let p = AoAParams::init(&mut store, "aoa", DIM, rng);
    for id in p.ids() {
        // non-zero biases so their gradients are exercised away from the init
        if store.get(id).rank() == 1 {
            *store.get_mut(id) = rand_t(&[DIM], rng);
        }
    }
    let q = rand_t(&[2, DIM], rng);
    let kv = rand_t(&[OBJECTS, DIM], rng);
    let r = check_params(&store, FD_STEP, |_| true, |b| {
        let tape = b.vars()[0].tape();
        let qv = tape.constant(q.clone());
        let kvv = tape.constant(kv.clone());
        let (v_hat, _) = multi_head(qv, kvv, kvv, HEADS)?;
        weigh(tape, aoa_gate(b, &p, qv, v_hat)?, 7)
    })?;
    Ok(CheckResult::new("aoa.params", r))
}

fn model(encoder: EncoderKind, decoder: ContextScheme, seed: u64) -> Result<CaptionModel> {
    CaptionModel::new(ModelConfig {
        feat_dim: DIM,
        dim: DIM,
        embed_dim: DIM,
        vocab_size: VOCAB,
        encoder,
        layers: LAYERS,
        enc_heads: HEADS,
        decoder,
        dec_heads: HEADS,
        ff_dim: 2 * DIM,
        experimental: decoder == ContextScheme::LstmAoa,
        init_seed: seed,
        ..ModelConfig::default()
    })
}

/// Every encoder/decoder combination used anywhere in the system.
pub const VARIANTS: [(EncoderKind, ContextScheme); 6] = [
    (EncoderKind::RefineAoa, ContextScheme::Aoa),
    (EncoderKind::RefineNoAoa, ContextScheme::Aoa),
    (EncoderKind::Base, ContextScheme::Base),
    (EncoderKind::Base, ContextScheme::Lstm),
    (EncoderKind::Base, ContextScheme::LstmAoa),
    (EncoderKind::RefineAoa, ContextScheme::Lstm),
];

fn end_to_end(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, (enc, dec)) in VARIANTS.into_iter().enumerate() {
        let m = model(enc, dec, 100 + i as u64)?;
        let feats = rand_t(&[OBJECTS, DIM], rng);
        let mut target: Vec<usize> = (0..SEQ_LEN - 1).map(|_| rng.random_range(4..VOCAB)).collect();
        target.push(EOS);
        let r = check_params(&m.params, FD_STEP, |_| true, |b| {
            let tape = b.vars()[0].tape();
            let img = m.image_context(tape, b, &feats)?;
            xe_loss(b, &m, &img, &target)
        })?;
        out.push(CheckResult::new(format!("xe.{enc}/{dec}"), r));
    }

    // policy-gradient surrogate for the full model on a fixed sampled sequence
    let m = model(EncoderKind::RefineAoa, ContextScheme::Aoa, 200)?;
    let feats = rand_t(&[OBJECTS, DIM], rng);
    let tokens: Vec<usize> = (0..SEQ_LEN - 1).map(|_| rng.random_range(4..VOCAB)).collect();
    let r = check_params(&m.params, FD_STEP, |_| true, |b| {
        let tape = b.vars()[0].tape();
        let img = m.image_context(tape, b, &feats)?;
        let lp = score_tokens(b, &m, &img, &tokens, true)?;
        Ok(scst_pseudo_loss(lp, 0.8, 0.3))
    })?;
    out.push(CheckResult::new("scst.refine-aoa/dec-aoa", r));
    Ok(out)
}

/// Runs every check. Deterministic for a given `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = op_checks(&mut rng)?;
    out.push(aoa_check(&mut rng)?);
    out.extend(end_to_end(&mut rng)?);
    Ok(out)
}
