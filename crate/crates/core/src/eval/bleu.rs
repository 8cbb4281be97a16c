//! Sentence-level BLEU-2 without smoothing.

use std::collections::HashMap;
use std::hash::Hash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::END;
use crate::generator::Generator;
use crate::tensor::Real;
use crate::{stream_seed, Result};

/// Sample counts scored by [`avg_bleu2`].
pub const BLEU_COUNTS: [usize; 5] = [200, 400, 600, 800, 1000];

#[derive(Clone, Debug, PartialEq)]
pub struct BleuResult {
    pub n_generated: usize,
    pub mean: f64,
    pub scores: Vec<f64>,
}

/// Reference statistics shared by every candidate: the maximum count of each
/// unigram and bigram over all references, and the sorted reference lengths.
#[derive(Clone, Debug)]
pub struct BleuReferences<W> {
    unigrams: HashMap<W, usize>,
    bigrams: HashMap<(W, W), usize>,
    lengths: Vec<usize>,
}

fn counts<K: Eq + Hash>(items: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Candidate n-gram matches, each capped at its reference maximum.
fn clipped<K: Eq + Hash>(candidate: HashMap<K, usize>, max_ref: &HashMap<K, usize>) -> usize {
    candidate
        .iter()
        .map(|(k, &n)| n.min(max_ref.get(k).copied().unwrap_or(0)))
        .sum()
}

impl<W: Eq + Hash + Clone> BleuReferences<W> {
    pub fn new<S: AsRef<[W]>>(references: &[S]) -> Self {
        let mut unigrams: HashMap<W, usize> = HashMap::new();
        let mut bigrams: HashMap<(W, W), usize> = HashMap::new();
        let mut lengths = Vec::with_capacity(references.len());
        for r in references {
            let r = r.as_ref();
            lengths.push(r.len());
            for (k, c) in counts(r.iter().cloned()) {
                let e = unigrams.entry(k).or_insert(0);
                *e = (*e).max(c);
            }
            for (k, c) in counts(r.windows(2).map(|w| (w[0].clone(), w[1].clone()))) {
                let e = bigrams.entry(k).or_insert(0);
                *e = (*e).max(c);
            }
        }
        lengths.sort_unstable();
        lengths.dedup();
        Self {
            unigrams,
            bigrams,
            lengths,
        }
    }

    /// Reference length closest to `c`, preferring the shorter on ties.
    fn closest_length(&self, c: usize) -> usize {
        self.lengths
            .iter()
            .copied()
            .min_by_key(|&r| (r.abs_diff(c), r))
            .unwrap_or(0)
    }

    /// Clipped unigram and bigram precisions, or `None` for candidates
    /// without a bigram.
    pub fn precisions(&self, candidate: &[W]) -> Option<(f64, f64)> {
        let c = candidate.len();
        if c < 2 {
            return None;
        }
        let m1 = clipped(counts(candidate.iter().cloned()), &self.unigrams);
        let m2 = clipped(
            counts(candidate.windows(2).map(|w| (w[0].clone(), w[1].clone()))),
            &self.bigrams,
        );
        Some((m1 as f64 / c as f64, m2 as f64 / (c - 1) as f64))
    }

    /// `1` above the closest reference length `r`, else `exp(1 − r/c)`.
    pub fn brevity_penalty(&self, c: usize) -> f64 {
        let r = self.closest_length(c);
        if c > r {
            1.0
        } else {
            (1.0 - r as f64 / c as f64).exp()
        }
    }

    /// BLEU-2 of one candidate. Candidates with no bigram, and candidates
    /// with a zero clipped precision at either order, score 0.
    pub fn score(&self, candidate: &[W]) -> f64 {
        if self.lengths.is_empty() {
            return 0.0;
        }
        match self.precisions(candidate) {
            Some((p1, p2)) if p1 > 0.0 && p2 > 0.0 => {
                self.brevity_penalty(candidate.len()) * (0.5 * p1.ln() + 0.5 * p2.ln()).exp()
            }
            _ => 0.0,
        }
    }
}

/// BLEU-2 of `candidate` against every sentence in `references`.
pub fn bleu2<W: Eq + Hash + Clone, S: AsRef<[W]>>(candidate: &[W], references: &[S]) -> f64 {
    BleuReferences::new(references).score(candidate)
}

/// Scores every candidate against the shared references in parallel.
pub fn score_sentences<W, S>(candidates: &[S], references: &BleuReferences<W>) -> BleuResult
where
    W: Eq + Hash + Clone + Send + Sync,
    S: AsRef<[W]> + Sync,
{
    let scores: Vec<f64> = candidates.par_iter().map(|c| references.score(c.as_ref())).collect();
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    BleuResult {
        n_generated: scores.len(),
        mean,
        scores,
    }
}

/// For each count, samples that many sentences (E stripped) with a stream
/// derived from `seed` and the count, and averages their BLEU-2 against
/// `references`.
pub fn avg_bleu2<T: Real>(
    g: &Generator<T>,
    references: &[Vec<usize>],
    counts: &[usize],
    budget: usize,
    seed: u64,
) -> Result<Vec<BleuResult>> {
    let refs = BleuReferences::new(references);
    counts
        .iter()
        .map(|&n| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, n as u64));
            let cands = (0..n)
                .map(|_| {
                    let mut t = g.sample_sequence(budget, 1.0, &mut rng)?.tokens;
                    if t.last() == Some(&END) {
                        t.pop();
                    }
                    Ok(t)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(score_sentences(&cands, &refs))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_and_disjoint() {
        let refs = [words("the cat sat"), words("a dog ran far")];
        assert_eq!(bleu2(&words("a dog ran far"), &refs), 1.0);
        assert_eq!(bleu2(&words("big red boat"), &refs), 0.0);
    }

    #[test]
    fn worked_examples() {
        let refs = [words("a b d"), words("b c")];
        assert_eq!(bleu2(&words("a b c"), &refs), 1.0);
        // p1 = 1/3 after clipping, no matching bigram
        assert_eq!(bleu2(&words("a a a"), &[words("a b")]), 0.0);
    }

    #[test]
    fn brevity_penalty_uses_closest_shorter_tie() {
        // c = 2, references of length 1 and 3 are equally close; 1 wins so BP = 1
        let refs = [words("x"), words("a b z")];
        assert_eq!(bleu2(&words("a b"), &refs), 1.0);
        // only a longer reference: BP = exp(1 - 3/2)
        let s = bleu2(&words("a b"), &[words("a b z")]);
        assert!((s - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn short_candidates_score_zero() {
        assert_eq!(bleu2::<&str, _>(&[], &[words("a b")]), 0.0);
        assert_eq!(bleu2(&words("a"), &[words("a")]), 0.0);
    }
}
