use std::collections::HashMap;

/// Clipped n-gram statistics of one segment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Closest reference length, the shorter one on ties.
fn closest_length(candidate_len: usize, references: &[Vec<&str>]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(candidate_len), len))
        .unwrap_or(0)
}

pub fn segment_stats(candidate: &[&str], references: &[Vec<&str>], max_n: usize) -> BleuStats {
    let mut stats = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        candidate_len: candidate.len(),
        reference_len: closest_length(candidate.len(), references),
    };
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        stats.totals[n - 1] = candidate.len().saturating_sub(n - 1);
        stats.matches[n - 1] = cand
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

impl BleuStats {
    pub fn add(&mut self, other: &BleuStats) {
        if self.matches.len() < other.matches.len() {
            self.matches.resize(other.matches.len(), 0);
            self.totals.resize(other.totals.len(), 0);
        }
        for i in 0..other.matches.len() {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Modified precisions; orders above 1 with no matches use add-one smoothing.
    pub fn precisions(&self) -> Vec<f64> {
        self.matches
            .iter()
            .zip(&self.totals)
            .enumerate()
            .map(|(i, (&m, &t))| {
                if i > 0 && m == 0 {
                    1.0 / (t as f64 + 1.0)
                } else if t == 0 {
                    0.0
                } else {
                    m as f64 / t as f64
                }
            })
            .collect()
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len > self.reference_len {
            1.0
        } else {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        }
    }

    /// Score in `[0, 100]`.
    pub fn score(&self) -> f64 {
        let p = self.precisions();
        if p.is_empty() || p.contains(&0.0) {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / p.len() as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}

/// BLEU of one whitespace-tokenized candidate against its references.
pub fn bleu(candidate: &str, references: &[String], max_n: usize) -> f64 {
    let cand: Vec<&str> = candidate.split_whitespace().collect();
    let refs: Vec<Vec<&str>> = references.iter().map(|r| r.split_whitespace().collect()).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    segment_stats(&cand, &refs, max_n).score()
}

/// Corpus BLEU: statistics summed over segments before combining.
/// Segments without references are skipped.
pub fn corpus_bleu(candidates: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    let mut total = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        ..BleuStats::default()
    };
    for (c, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            continue;
        }
        let cand: Vec<&str> = c.split_whitespace().collect();
        let refs: Vec<Vec<&str>> = refs.iter().map(|r| r.split_whitespace().collect()).collect();
        total.add(&segment_stats(&cand, &refs, max_n));
    }
    total.score()
}
