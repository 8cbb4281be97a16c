use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::END;
use crate::discriminator::{pad_to_length, Discriminator};
use crate::generator::{Cursor, Generator, SampledSequence};
use crate::tensor::Real;
use crate::{stream_seed, Error, Result};

/// Action values `Q(Y_{1:t-1}, y_t)` for every position of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardEstimate {
    pub q: Vec<f64>,
    /// Completions drawn per unfinished prefix.
    pub rollouts: usize,
}

fn is_finished(prefix: &[usize], max_len: usize) -> bool {
    prefix.last() == Some(&END) || prefix.len() >= max_len
}

fn q_from_cursor<T: Real, R: Rng + ?Sized>(
    g: &Generator<T>,
    d: &Discriminator<T>,
    cursor: &Cursor<T>,
    prefix: &[usize],
    n: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<f64> {
    let reward = |seq: &[usize]| d.classify(&pad_to_length(seq, d.config.seq_len));
    if is_finished(prefix, max_len) {
        return reward(prefix);
    }
    let mut total = 0.0;
    for _ in 0..n {
        let done = g.continue_from(cursor, prefix, max_len, 1.0, rng)?;
        total += reward(&done.tokens)?;
    }
    Ok(total / n as f64)
}

/// Expected final reward of `prefix`: the discriminator score itself when
/// the prefix is finished (ends in E or has `max_len` tokens), otherwise the
/// mean score of `n` sampled completions.
pub fn mc_q_estimate<T: Real, R: Rng + ?Sized>(
    g: &Generator<T>,
    d: &Discriminator<T>,
    prefix: &[usize],
    n: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("at least one rollout is required".into()));
    }
    if prefix.len() > max_len {
        return Err(Error::Invalid(format!(
            "prefix of length {} exceeds max_len {max_len}",
            prefix.len()
        )));
    }
    let cursor = if is_finished(prefix, max_len) {
        g.start()
    } else {
        g.cursors(prefix)?.pop().expect("start cursor")
    };
    q_from_cursor(g, d, &cursor, prefix, n, max_len, rng)
}

/// Q for each prefix `tokens[..=t]`, positions evaluated in parallel with
/// independent streams derived from `seed`.
pub fn estimate_rewards<T: Real>(
    g: &Generator<T>,
    d: &Discriminator<T>,
    tokens: &[usize],
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<RewardEstimate> {
    if n == 0 {
        return Err(Error::Invalid("at least one rollout is required".into()));
    }
    let cursors = g.cursors(tokens)?;
    let q = (1..=tokens.len())
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, t as u64));
            q_from_cursor(g, d, &cursors[t], &tokens[..t], n, max_len, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RewardEstimate { q, rollouts: n })
}

/// Rewards for a batch; one seed per sequence is drawn from `rng` up front.
pub fn batch_rewards<T: Real, R: Rng + ?Sized>(
    g: &Generator<T>,
    d: &Discriminator<T>,
    seqs: &[SampledSequence<T>],
    n: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<RewardEstimate>> {
    let seeds: Vec<u64> = seqs.iter().map(|_| rng.random()).collect();
    seqs.par_iter()
        .zip(seeds)
        .map(|(s, seed)| estimate_rewards(g, d, &s.tokens, n, max_len, seed))
        .collect()
}
