use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::tokenize::tokenize;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token ↔ index map. Indices 0..4 are reserved; the rest follow frequency
/// (descending), then lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps every token seen at least `min_count` times across `captions`.
    pub fn build<S: AsRef<str>>(captions: &[S], min_count: usize) -> Result<Self> {
        if captions.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in captions {
            for t in tokenize(c.as_ref()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, n)| *n >= min_count && !RESERVED.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Vocabulary::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::Data("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        self.tokens.get(index).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    /// Token indices for a sentence, unknown words mapped to UNK.
    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        tokenize(sentence)
            .iter()
            .map(|t| self.index_of(t).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_threshold() {
        let mut corpus = vec!["kept"; 5];
        corpus.extend(vec!["dropped"; 4]);
        let v = Vocabulary::build(&corpus, 5).unwrap();
        assert!(v.index_of("kept").is_some());
        assert_eq!(v.index_of("dropped"), None);
        assert_eq!(v.encode("kept dropped"), vec![4, UNK]);

        let all = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn ordering_is_frequency_then_lexicographic() {
        let corpus = ["b a c", "c b", "c", "d"];
        let v = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(&v.tokens()[4..], &["c", "b", "a", "d"]);
        assert_eq!(Vocabulary::build(&corpus, 1).unwrap(), v);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let v = Vocabulary::build(&["x y"], 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocabulary>("[\"x\"]").is_err());
        assert!(Vocabulary::build::<&str>(&[], 1).is_err());
    }
}
