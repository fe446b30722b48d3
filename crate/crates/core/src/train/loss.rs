//! Training objectives: teacher-forced cross-entropy, its scheduled-sampling
//! variant, and the self-critical policy-gradient surrogate.

use rand::Rng;

use crate::autograd::{sum_scalars, Var};
use crate::data::vocab::{BOS, EOS};
use crate::error::{Error, Result};
use crate::model::decode::{greedy_on, sample_categorical, sample_on};
use crate::model::{decoder_step, CaptionModel, DecoderState, ImageContext};
use crate::params::Bound;

fn check_target(target: &[usize]) -> Result<()> {
    match target.last() {
        None => Err(Error::Contract("empty target sequence".into())),
        Some(&EOS) => Ok(()),
        Some(_) => Err(Error::Contract("target sequence must end with EOS".into())),
    }
}

/// `−Σ_t log p(y*_t | y*_{<t})` with teacher forcing.
pub fn xe_loss<'t>(
    bound: &Bound<'t>,
    model: &CaptionModel,
    img: &ImageContext<'t>,
    target: &[usize],
) -> Result<Var<'t>> {
    check_target(target)?;
    let tape = img.feats.tape();
    let mut state = DecoderState::initial(tape, &model.decoder);
    let mut word = BOS;
    let mut terms = Vec::with_capacity(target.len());
    for &y in target {
        let out = decoder_step(bound, &model.decoder, &state, word, img)?;
        terms.push(out.logits.log_softmax_rows().pick(0, y)?);
        state = out.state;
        word = y;
    }
    Ok(sum_scalars(&terms)?.scale(-1.0))
}

/// Cross-entropy where each next input is, with probability `ss_prob`, a
/// token sampled from the model's current prediction instead of `y*_t`.
/// Targets are always the reference tokens.
pub fn scheduled_sampling_loss<'t, R: Rng + ?Sized>(
    bound: &Bound<'t>,
    model: &CaptionModel,
    img: &ImageContext<'t>,
    target: &[usize],
    ss_prob: f64,
    rng: &mut R,
) -> Result<Var<'t>> {
    check_target(target)?;
    if !(0.0..=1.0).contains(&ss_prob) {
        return Err(Error::Contract(format!("ss_prob {ss_prob} outside [0, 1]")));
    }
    let tape = img.feats.tape();
    let mut state = DecoderState::initial(tape, &model.decoder);
    let mut word = BOS;
    let mut terms = Vec::with_capacity(target.len());
    for (t, &y) in target.iter().enumerate() {
        let out = decoder_step(bound, &model.decoder, &state, word, img)?;
        let logp = out.logits.log_softmax_rows();
        terms.push(logp.pick(0, y)?);
        state = out.state;
        if t + 1 < target.len() {
            let u: f64 = rng.random();
            word = if u < ss_prob {
                let probs: Vec<f64> = logp.value().data().iter().map(|v| v.exp()).collect();
                sample_categorical(&probs, rng)
            } else {
                y
            };
        }
    }
    Ok(sum_scalars(&terms)?.scale(-1.0))
}

/// `−(r_s − r_g)·Σ_t log p(y^s_t)`: its gradient is the self-critical
/// estimate of `−∇E[r]`, with the rewards held constant.
pub fn scst_pseudo_loss<'t>(logprob_sum: Var<'t>, reward_sample: f64, reward_greedy: f64) -> Var<'t> {
    logprob_sum.scale(-(reward_sample - reward_greedy))
}

pub struct ScstStep<'t> {
    pub loss: Var<'t>,
    pub reward_sample: f64,
    pub reward_greedy: f64,
    pub sample: Vec<usize>,
    pub greedy: Vec<usize>,
}

/// Samples a caption, decodes the greedy baseline and forms the
/// self-critical surrogate. `reward` scores a token sequence (EOS excluded).
pub fn scst_step<'t, R, F>(
    bound: &Bound<'t>,
    model: &CaptionModel,
    img: &ImageContext<'t>,
    max_len: usize,
    rng: &mut R,
    reward: F,
) -> Result<ScstStep<'t>>
where
    R: Rng + ?Sized,
    F: Fn(&[usize]) -> Result<f64>,
{
    let (sample, logprob) = sample_on(bound, model, img, max_len, rng)?;
    let (greedy, _) = greedy_on(bound, model, img, max_len)?;
    let reward_sample = reward(&sample)?;
    let reward_greedy = reward(&greedy)?;
    Ok(ScstStep {
        loss: scst_pseudo_loss(logprob, reward_sample, reward_greedy),
        reward_sample,
        reward_greedy,
        sample,
        greedy,
    })
}
