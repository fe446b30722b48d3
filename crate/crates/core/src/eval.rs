//! Split-level caption generation and scoring.

use rayon::prelude::*;

use crate::data::{Dataset, Vocabulary};
use crate::error::Result;
use crate::metrics::{corpus_scores, Scores};
use crate::model::decode::{decode_beam, decode_greedy};
use crate::model::CaptionModel;

/// Decodes one caption to words; `beam == 1` is greedy.
pub fn caption_words(
    model: &CaptionModel,
    vocab: &Vocabulary,
    feats: &crate::Tensor,
    beam: usize,
    max_len: usize,
) -> Result<Vec<String>> {
    let tokens = if beam == 1 {
        decode_greedy(model, feats, max_len)?
    } else {
        decode_beam(model, feats, beam, max_len)?
    };
    Ok(vocab.decode(&tokens))
}

/// Captions every listed image (in parallel, results in input order) and
/// scores them against the references. `None` for an empty id list.
pub fn evaluate_ids(
    model: &CaptionModel,
    vocab: &Vocabulary,
    data: &Dataset,
    ids: &[String],
    beam: usize,
    max_len: usize,
) -> Result<Option<Scores>> {
    if ids.is_empty() {
        return Ok(None);
    }
    let records = data.records(ids)?;
    let outputs = records
        .par_iter()
        .map(|rec| Ok((*rec, caption_words(model, vocab, &rec.features, beam, max_len)?)))
        .collect::<Result<Vec<_>>>()?;
    corpus_scores(&outputs).map(Some)
}
