//! CIDEr-D: TF-IDF n-gram cosine with clipping and a Gaussian length
//! penalty, averaged over orders 1..=4 and scaled by 10.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};

use super::ngrams::{ngram_counts, Counts};

pub const MAX_N: usize = 4;
pub const SIGMA: f64 = 6.0;

/// Document frequencies of reference n-grams, one document per image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CiderCorpusStats {
    df: [HashMap<String, usize>; MAX_N],
    images: usize,
}

impl CiderCorpusStats {
    /// Builds stats from each image's tokenized reference set.
    pub fn build<S: AsRef<str>, R: AsRef<[S]>>(corpus: &[Vec<R>]) -> Self {
        let mut stats = CiderCorpusStats::default();
        for refs in corpus {
            stats.images += 1;
            for n in 1..=MAX_N {
                let seen: HashSet<String> = refs
                    .iter()
                    .flat_map(|r| ngram_counts(r.as_ref(), n).into_keys())
                    .collect();
                for g in seen {
                    *stats.df[n - 1].entry(g).or_insert(0) += 1;
                }
            }
        }
        stats
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn df(&self, n: usize, ngram: &str) -> usize {
        self.df[n - 1].get(ngram).copied().unwrap_or(0)
    }

    /// `ln(N / max(df, 1))`.
    pub fn idf(&self, n: usize, ngram: &str) -> f64 {
        (self.images as f64 / self.df(n, ngram).max(1) as f64).ln()
    }

    fn tfidf<'a>(&self, counts: &'a Counts, n: usize) -> (BTreeMap<&'a str, f64>, f64) {
        let vec: BTreeMap<&str, f64> = counts
            .iter()
            .map(|(g, &c)| (g.as_str(), c as f64 * self.idf(n, g)))
            .collect();
        let norm = vec.values().map(|v| v * v).sum::<f64>().sqrt();
        (vec, norm)
    }
}

/// Clipped inner product `⟨min(c, r), r⟩` of two TF-IDF vectors.
pub fn clipped_dot(cand: &BTreeMap<&str, f64>, reference: &BTreeMap<&str, f64>) -> f64 {
    cand.iter()
        .filter_map(|(g, &c)| reference.get(g).map(|&r| c.min(r) * r))
        .sum()
}

pub fn cider_d<S: AsRef<str>, T: AsRef<str>, R: AsRef<[T]>>(
    candidate: &[S],
    references: &[R],
    stats: &CiderCorpusStats,
) -> Result<f64> {
    if stats.images == 0 {
        return Err(Error::Config("CIDEr-D corpus statistics are empty".into()));
    }
    if references.is_empty() {
        return Err(Error::Contract("CIDEr-D needs at least one reference".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for n in 1..=MAX_N {
        let cand_counts = ngram_counts(candidate, n);
        let (cv, cn) = stats.tfidf(&cand_counts, n);
        for r in references {
            let r = r.as_ref();
            let ref_counts = ngram_counts(r, n);
            let (rv, rn) = stats.tfidf(&ref_counts, n);
            if cn == 0.0 || rn == 0.0 {
                continue;
            }
            let delta = candidate.len() as f64 - r.len() as f64;
            let penalty = (-delta * delta / (2.0 * SIGMA * SIGMA)).exp();
            total += penalty * clipped_dot(&cv, &rv) / (cn * rn);
        }
    }
    Ok(10.0 * total / (MAX_N as f64 * references.len() as f64))
}
