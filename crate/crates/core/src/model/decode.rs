//! Greedy, sampled and beam-search decoding.

use rand::Rng;
use serde::Serialize;

use crate::autograd::{log_softmax, sum_scalars, Tape, Var};
use crate::data::vocab::{BOS, EOS};
use crate::error::{Error, Result};
use crate::params::Bound;
use crate::tensor::Tensor;

use super::decoder::{decoder_step, DecoderState, ImageContext};
use super::CaptionModel;

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from a probability vector using one uniform draw.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            cum += p;
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}

fn check_len(max_len: usize) -> Result<()> {
    if max_len == 0 {
        return Err(Error::Contract("max_len must be at least 1".into()));
    }
    Ok(())
}

/// Greedy decoding on an existing tape. Returns the tokens (EOS excluded)
/// and the summed log-probability of every emitted step, EOS included.
pub fn greedy_on<'t>(
    bound: &Bound<'t>,
    model: &CaptionModel,
    img: &ImageContext<'t>,
    max_len: usize,
) -> Result<(Vec<usize>, f64)> {
    check_len(max_len)?;
    let tape = img.feats.tape();
    let mut state = DecoderState::initial(tape, &model.decoder);
    let mut word = BOS;
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    for _ in 0..max_len {
        let out = decoder_step(bound, &model.decoder, &state, word, img)?;
        let lp = log_softmax(out.logits.value().data());
        let next = argmax(&lp);
        logprob += lp[next];
        if next == EOS {
            break;
        }
        tokens.push(next);
        state = out.state;
        word = next;
    }
    Ok((tokens, logprob))
}

pub fn decode_greedy(model: &CaptionModel, feats: &Tensor, max_len: usize) -> Result<Vec<usize>> {
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let img = model.image_context(&tape, &bound, feats)?;
    Ok(greedy_on(&bound, model, &img, max_len)?.0)
}

/// Samples a caption from the model's own distribution. The returned scalar
/// is `Σ_t log p(y_t)` over every sampled step (EOS included when drawn)
/// and stays differentiable.
pub fn sample_on<'t, R: Rng + ?Sized>(
    bound: &Bound<'t>,
    model: &CaptionModel,
    img: &ImageContext<'t>,
    max_len: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Var<'t>)> {
    check_len(max_len)?;
    let tape = img.feats.tape();
    let mut state = DecoderState::initial(tape, &model.decoder);
    let mut word = BOS;
    let mut tokens = Vec::new();
    let mut terms = Vec::new();
    for _ in 0..max_len {
        let out = decoder_step(bound, &model.decoder, &state, word, img)?;
        let logp = out.logits.log_softmax_rows();
        let probs: Vec<f64> = logp.value().data().iter().map(|v| v.exp()).collect();
        let next = sample_categorical(&probs, rng);
        terms.push(logp.pick(0, next)?);
        if next == EOS {
            break;
        }
        tokens.push(next);
        state = out.state;
        word = next;
    }
    Ok((tokens, sum_scalars(&terms)?))
}

pub fn decode_sample<R: Rng + ?Sized>(
    model: &CaptionModel,
    feats: &Tensor,
    max_len: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, f64)> {
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let img = model.image_context(&tape, &bound, feats)?;
    let (tokens, lp) = sample_on(&bound, model, &img, max_len, rng)?;
    Ok((tokens, lp.item()))
}

/// Teacher-forced `Σ_t log p(tokens_t)`, with a final EOS term when
/// `with_eos` is set.
pub fn score_tokens<'t>(
    bound: &Bound<'t>,
    model: &CaptionModel,
    img: &ImageContext<'t>,
    tokens: &[usize],
    with_eos: bool,
) -> Result<Var<'t>> {
    let tape = img.feats.tape();
    let mut targets = tokens.to_vec();
    if with_eos {
        targets.push(EOS);
    }
    let mut state = DecoderState::initial(tape, &model.decoder);
    let mut word = BOS;
    let mut terms = Vec::with_capacity(targets.len());
    for &y in &targets {
        let out = decoder_step(bound, &model.decoder, &state, word, img)?;
        terms.push(out.logits.log_softmax_rows().pick(0, y)?);
        state = out.state;
        word = y;
    }
    sum_scalars(&terms)
}

struct Hyp<'t> {
    tokens: Vec<usize>,
    logprob: f64,
    state: DecoderState<'t>,
}

/// Length-normalised score: summed log-probability over scored steps.
fn normalised(logprob: f64, steps: usize) -> f64 {
    logprob / steps.max(1) as f64
}

/// Beam search ranking partial hypotheses by cumulative log-probability and
/// finished ones by length-normalised log-probability. The greedy caption is
/// always among the final candidates, so the result never scores below it.
pub fn decode_beam(model: &CaptionModel, feats: &Tensor, beam: usize, max_len: usize) -> Result<Vec<usize>> {
    if beam == 0 {
        return Err(Error::Contract("beam size must be at least 1".into()));
    }
    check_len(max_len)?;
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let img = model.image_context(&tape, &bound, feats)?;

    let (greedy, greedy_lp) = greedy_on(&bound, model, &img, max_len)?;
    let greedy_steps = greedy.len() + usize::from(greedy.len() < max_len);
    // (score, tokens)
    let mut finished: Vec<(f64, Vec<usize>)> = vec![(normalised(greedy_lp, greedy_steps), greedy)];

    let mut live = vec![Hyp {
        tokens: Vec::new(),
        logprob: 0.0,
        state: DecoderState::initial(&tape, &model.decoder),
    }];
    for step in 0..max_len {
        // (cumulative logprob, hyp index, token)
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (hi, hyp) in live.iter().enumerate() {
            let word = hyp.tokens.last().copied().unwrap_or(BOS);
            let out = decoder_step(&bound, &model.decoder, &hyp.state, word, &img)?;
            let lp = log_softmax(out.logits.value().data());
            cands.extend(lp.iter().enumerate().map(|(tok, l)| (hyp.logprob + l, hi, tok)));
            next_states.push(out.state);
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next_live = Vec::with_capacity(beam);
        for &(lp, hi, tok) in cands.iter().take(beam) {
            if tok == EOS {
                let tokens = live[hi].tokens.clone();
                finished.push((normalised(lp, tokens.len() + 1), tokens));
            } else {
                let mut tokens = live[hi].tokens.clone();
                tokens.push(tok);
                next_live.push(Hyp {
                    tokens,
                    logprob: lp,
                    state: next_states[hi],
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
        if step + 1 == max_len {
            for hyp in &live {
                finished.push((normalised(hyp.logprob, hyp.tokens.len()), hyp.tokens.clone()));
            }
        }
    }
    let mut best = 0;
    for (i, (score, _)) in finished.iter().enumerate() {
        if *score > finished[best].0 {
            best = i;
        }
    }
    Ok(finished.swap_remove(best).1)
}

/// Length-normalised log-probability of a caption under teacher forcing,
/// matching the score used to rank beam-search results.
pub fn normalised_logprob(model: &CaptionModel, feats: &Tensor, tokens: &[usize], max_len: usize) -> Result<f64> {
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let img = model.image_context(&tape, &bound, feats)?;
    let with_eos = tokens.len() < max_len;
    let lp = score_tokens(&bound, model, &img, tokens, with_eos)?.item();
    Ok(normalised(lp, tokens.len() + usize::from(with_eos)))
}

/// One greedy decoding step as recorded for inspection.
#[derive(Clone, Debug, Serialize)]
pub struct StepTrace {
    pub t: usize,
    pub token: usize,
    /// Attention weights over the image features, one row per head.
    pub attention: Vec<Vec<f64>>,
    /// Mean gate activation per head-sized channel group; absent for heads
    /// without a gate.
    pub gate_means: Option<Vec<f64>>,
}

/// Greedy decoding that records attention weights and gate statistics.
pub fn greedy_traced(model: &CaptionModel, feats: &Tensor, max_len: usize) -> Result<(Vec<usize>, Vec<StepTrace>)> {
    check_len(max_len)?;
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let img = model.image_context(&tape, &bound, feats)?;
    let dec = &model.decoder;
    let mut state = DecoderState::initial(&tape, dec);
    let mut word = BOS;
    let mut tokens = Vec::new();
    let mut steps = Vec::new();
    for t in 0..max_len {
        let out = decoder_step(&bound, dec, &state, word, &img)?;
        let next = argmax(out.logits.value().data());
        let gate_means = out.gate.map(|g| {
            let g = g.value();
            let width = dec.dim / dec.heads;
            g.data()
                .chunks(width)
                .map(|c| c.iter().sum::<f64>() / width as f64)
                .collect()
        });
        steps.push(StepTrace {
            t,
            token: next,
            attention: out.trace.heads.iter().map(|h| h[0].clone()).collect(),
            gate_means,
        });
        if next == EOS {
            break;
        }
        tokens.push(next);
        state = out.state;
        word = next;
    }
    Ok((tokens, steps))
}
