//! BLEU with clipped n-gram precision, geometric mean and brevity penalty.

use super::ngrams::ngram_counts;

/// Clipped match and total counts per order plus the length pair used by
/// the brevity penalty. Sentence and corpus BLEU both reduce to this.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            cand_len: 0,
            ref_len: 0,
        }
    }

    pub fn add<S: AsRef<str>, R: AsRef<[S]>>(&mut self, candidate: &[S], references: &[R]) {
        let max_n = self.matches.len();
        for n in 1..=max_n {
            let (m, t) = clipped_counts(candidate, references, n);
            self.matches[n - 1] += m;
            self.totals[n - 1] += t;
        }
        self.cand_len += candidate.len();
        self.ref_len += closest_ref_len(candidate.len(), references);
    }

    /// Scores for every order `1..=max_n`, each with uniform weights over
    /// its own orders.
    pub fn scores(&self) -> Vec<f64> {
        if self.cand_len == 0 {
            return vec![0.0; self.matches.len()];
        }
        let bp = brevity_penalty(self.cand_len, self.ref_len);
        let mut log_sum = 0.0;
        let mut zero = false;
        (1..=self.matches.len())
            .map(|n| {
                let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
                if m == 0 || t == 0 {
                    zero = true;
                }
                if zero {
                    return 0.0;
                }
                log_sum += (m as f64 / t as f64).ln();
                bp * (log_sum / n as f64).exp()
            })
            .collect()
    }
}

/// Clipped matches and candidate n-gram total at order `n`.
pub fn clipped_counts<S: AsRef<str>, R: AsRef<[S]>>(
    candidate: &[S],
    references: &[R],
    n: usize,
) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs: Vec<_> = references.iter().map(|r| ngram_counts(r.as_ref(), n)).collect();
    let mut matches = 0;
    let mut total = 0;
    for (g, &c) in &cand {
        let max_ref = refs.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
        matches += c.min(max_ref);
        total += c;
    }
    (matches, total)
}

/// Reference length closest to `cand_len`; ties go to the shorter one.
pub fn closest_ref_len<S: AsRef<str>, R: AsRef<[S]>>(cand_len: usize, references: &[R]) -> usize {
    references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&l| (l.abs_diff(cand_len), l))
        .unwrap_or(0)
}

pub fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp().min(1.0)
    }
}

/// Sentence BLEU-`max_n`.
pub fn bleu<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R], max_n: usize) -> f64 {
    let mut stats = BleuStats::new(max_n);
    stats.add(candidate, references);
    stats.scores()[max_n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;
    use proptest::prelude::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identical_sentence_scores_one() {
        let c = t("a red circle left of a blue square");
        assert!((bleu(&c, &[c.clone()], 4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unigram_clipping() {
        let (m, total) = clipped_counts(&t("the the the"), &[t("the cat")], 1);
        assert_eq!((m, total), (1, 3));
        // the bigram "the the" never matches, so BLEU-2 is zero
        assert_eq!(bleu(&t("the the the"), &[t("the cat")], 2), 0.0);
        let b1 = bleu(&t("the the the"), &[t("the cat")], 1);
        assert!((b1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_cases() {
        assert_eq!(brevity_penalty(5, 3), 1.0);
        assert!((brevity_penalty(2, 4) - (-1.0f64).exp()).abs() < 1e-15);
        let c = t("a b c d e");
        assert_eq!(closest_ref_len(c.len(), &[t("a b c"), t("a b c d")]), 4);
        assert_eq!(closest_ref_len(3, &[t("a b"), t("a b c d")]), 2);
    }

    #[test]
    fn hand_computed_bleu2() {
        // cand "a b c d", ref "a b d": p1 = 3/4, p2 = 1/3 (only "a b"), c=4 > r=3
        let s = bleu(&t("a b c d"), &[t("a b d")], 2);
        let expected = (0.5 * (0.75f64.ln() + (1.0f64 / 3.0).ln())).exp();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_is_zero() {
        assert_eq!(bleu::<String, _>(&[], &[t("a b")], 4), 0.0);
    }

    #[test]
    fn corpus_pools_counts() {
        let mut st = BleuStats::new(1);
        st.add(&t("a b"), &[t("a b")]);
        st.add(&t("c d"), &[t("c e")]);
        // 3 of 4 unigrams match, lengths equal
        assert!((st.scores()[0] - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn in_range_and_reference_order_invariant(
            c in prop::collection::vec(0u8..5, 0..8),
            r1 in prop::collection::vec(0u8..5, 1..8),
            r2 in prop::collection::vec(0u8..5, 1..8),
        ) {
            let w = |v: &Vec<u8>| v.iter().map(|x| format!("w{x}")).collect::<Vec<_>>();
            let (c, r1, r2) = (w(&c), w(&r1), w(&r2));
            for n in 1..=4 {
                let a = bleu(&c, &[r1.clone(), r2.clone()], n);
                let b = bleu(&c, &[r2.clone(), r1.clone()], n);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
                prop_assert_eq!(a, b);
            }
        }
    }
}
