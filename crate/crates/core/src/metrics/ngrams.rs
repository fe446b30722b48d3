//! N-gram counting shared by the metrics.

use std::collections::BTreeMap;

pub type Counts = BTreeMap<String, usize>;

/// Counts the order-`n` n-grams of `tokens`, keyed by their space-joined text.
pub fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> Counts {
    let mut counts = Counts::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        let key = w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_overlapping_windows() {
        let c = ngram_counts(&["a", "a", "a"], 2);
        assert_eq!(c.len(), 1);
        assert_eq!(c["a a"], 2);
        assert!(ngram_counts(&["a"], 2).is_empty());
    }
}
