//! Caption metrics (BLEU, ROUGE-L, CIDEr-D), corpus aggregation and the
//! CIDEr-D reward used for self-critical training.

pub mod bleu;
pub mod cider;
pub mod ngrams;
pub mod rouge;
pub mod tokenize;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::ImageRecord;
use crate::error::{Error, Result};

pub use bleu::{bleu, BleuStats};
pub use cider::{cider_d, CiderCorpusStats};
pub use rouge::rouge_l;
pub use tokenize::{detokenize, tokenize};

/// Aggregate scores keyed the way reports print them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(rename = "B1")]
    pub bleu1: f64,
    #[serde(rename = "B4")]
    pub bleu4: f64,
    #[serde(rename = "R")]
    pub rouge_l: f64,
    #[serde(rename = "C")]
    pub cider_d: f64,
}

fn tokenized_refs(img: &ImageRecord) -> Vec<Vec<String>> {
    img.captions.iter().map(|c| tokenize(c)).filter(|t| !t.is_empty()).collect()
}

/// Scores generated captions against their images' references.
///
/// BLEU pools counts over the corpus; ROUGE-L and CIDEr-D are means over
/// images. CIDEr-D document frequencies come from the evaluated images.
pub fn corpus_scores(outputs: &[(&ImageRecord, Vec<String>)]) -> Result<Scores> {
    if outputs.is_empty() {
        return Err(Error::EmptyInput("corpus_scores"));
    }
    let refs: Vec<Vec<Vec<String>>> = outputs.iter().map(|(img, _)| tokenized_refs(img)).collect();
    let missing: Vec<&str> = outputs
        .iter()
        .zip(&refs)
        .filter(|(_, r)| r.is_empty())
        .map(|((img, _), _)| img.image_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!("missing references for: {}", missing.join(", "))));
    }
    let stats = CiderCorpusStats::build(&refs);
    let mut bleu_stats = BleuStats::new(4);
    let (mut rouge, mut cider) = (0.0, 0.0);
    for ((_, cand), r) in outputs.iter().zip(&refs) {
        bleu_stats.add(cand, r);
        rouge += rouge_l(cand, r);
        cider += cider_d(cand, r, &stats)?;
    }
    let b = bleu_stats.scores();
    let n = outputs.len() as f64;
    Ok(Scores {
        bleu1: b[0],
        bleu4: b[3],
        rouge_l: rouge / n,
        cider_d: cider / n,
    })
}

/// CIDEr-D reward with document frequencies frozen at construction.
#[derive(Clone, Debug)]
pub struct CiderReward {
    stats: CiderCorpusStats,
    refs: HashMap<String, Vec<Vec<String>>>,
}

impl CiderReward {
    pub fn new<'a>(images: impl IntoIterator<Item = &'a ImageRecord>) -> Self {
        let refs: HashMap<String, Vec<Vec<String>>> = images
            .into_iter()
            .map(|img| (img.image_id.clone(), tokenized_refs(img)))
            .collect();
        let mut ids: Vec<&String> = refs.keys().collect();
        ids.sort();
        let corpus: Vec<Vec<Vec<String>>> = ids.iter().map(|id| refs[*id].clone()).collect();
        CiderReward {
            stats: CiderCorpusStats::build(&corpus),
            refs,
        }
    }

    pub fn stats(&self) -> &CiderCorpusStats {
        &self.stats
    }

    pub fn score<S: AsRef<str>>(&self, image_id: &str, candidate: &[S]) -> Result<f64> {
        let refs = self.refs.get(image_id).ok_or_else(|| Error::Reward {
            image_id: image_id.to_string(),
            reason: "no references".into(),
        })?;
        if refs.is_empty() {
            return Err(Error::Reward {
                image_id: image_id.to_string(),
                reason: "no references".into(),
            });
        }
        cider_d(candidate, refs, &self.stats).map_err(|e| Error::Reward {
            image_id: image_id.to_string(),
            reason: e.to_string(),
        })
    }
}
