//! ROUGE-L: longest-common-subsequence F-measure.

pub const BETA: f64 = 1.2;

pub fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Maximum LCS F-measure over the references.
pub fn rouge_l<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R]) -> f64 {
    references
        .iter()
        .map(|r| {
            let r = r.as_ref();
            let lcs = lcs_len(candidate, r) as f64;
            if lcs == 0.0 {
                return 0.0;
            }
            let p = lcs / candidate.len() as f64;
            let rec = lcs / r.len() as f64;
            let b2 = BETA * BETA;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}
