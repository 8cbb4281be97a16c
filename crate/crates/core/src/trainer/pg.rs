use super::{clip_and_step, per_item_gradients, set_gradients, AdamState, RewardEstimate};
use crate::generator::{Generator, SampledSequence};
use crate::tensor::Real;
use crate::{Error, Result};

/// Per-position exponential moving average of rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub decay: f64,
    pub values: Vec<Option<f64>>,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Self {
            decay,
            values: Vec::new(),
        }
    }

    /// Baselines for this batch; positions seen for the first time use the
    /// batch mean. The averages are then updated with the batch means.
    fn advance(&mut self, rewards: &[RewardEstimate]) -> Vec<f64> {
        let longest = rewards.iter().map(|r| r.q.len()).max().unwrap_or(0);
        if self.values.len() < longest {
            self.values.resize(longest, None);
        }
        let mut current = Vec::with_capacity(longest);
        for t in 0..longest {
            let qs: Vec<f64> = rewards.iter().filter_map(|r| r.q.get(t).copied()).collect();
            let mean = qs.iter().sum::<f64>() / qs.len() as f64;
            let b = self.values[t].unwrap_or(mean);
            current.push(b);
            self.values[t] = Some(self.decay * b + (1.0 - self.decay) * mean);
        }
        current
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgStats {
    /// Batch mean of `Σ_t w_t log G(y_t | y_<t)`.
    pub surrogate: f64,
    pub mean_reward: f64,
    pub grad_norm: f64,
}

/// Stores the gradient of `−mean_i Σ_t w_{i,t} log G(y_t | y_<t)` in
/// `g.params`, where `w = Q − baseline` (or `Q` without a baseline). Rewards
/// are constants; each sequence is replayed with its recorded latent noise.
/// Returns the batch mean of `Σ_t w_{i,t} log G`.
pub fn pg_gradient<T: Real>(
    g: &mut Generator<T>,
    seqs: &[SampledSequence<T>],
    rewards: &[RewardEstimate],
    baseline: Option<&mut Baseline>,
) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::Invalid("empty policy-gradient batch".into()));
    }
    if seqs.len() != rewards.len() {
        return Err(Error::Invalid(format!(
            "{} sequences but {} reward estimates",
            seqs.len(),
            rewards.len()
        )));
    }
    for (s, r) in seqs.iter().zip(rewards) {
        if s.tokens.len() != r.q.len() {
            return Err(Error::Invalid(format!(
                "sequence has {} positions but {} rewards",
                s.tokens.len(),
                r.q.len()
            )));
        }
    }
    let offsets = match baseline {
        Some(b) => b.advance(rewards),
        None => Vec::new(),
    };
    let items: Vec<(&SampledSequence<T>, Vec<T>)> = seqs
        .iter()
        .zip(rewards)
        .map(|(s, r)| {
            let w = r
                .q
                .iter()
                .enumerate()
                .map(|(t, &q)| T::lit(q - offsets.get(t).copied().unwrap_or(0.0)))
                .collect();
            (s, w)
        })
        .collect();
    let scale = T::lit(-1.0 / seqs.len() as f64);
    let model = &*g;
    let (grads, loss) = per_item_gradients(&items, |tape, (s, w)| {
        let p = tape.bind(&model.params);
        Ok(model.weighted_log_likelihood(tape, &p, &s.tokens, &s.noise, w)?.scale(scale)?)
    })?;
    set_gradients(&mut g.params, &grads)?;
    Ok(-loss)
}

/// [`pg_gradient`], then clipping and one Adam descent step on the negated
/// surrogate, which ascends the expected reward.
pub fn pg_update<T: Real>(
    g: &mut Generator<T>,
    adam: &mut AdamState<T>,
    seqs: &[SampledSequence<T>],
    rewards: &[RewardEstimate],
    baseline: Option<&mut Baseline>,
    clip_norm: f64,
) -> Result<PgStats> {
    let surrogate = pg_gradient(g, seqs, rewards, baseline)?;
    let grad_norm = clip_and_step(&mut g.params, adam, clip_norm)?;
    let n: usize = rewards.iter().map(|r| r.q.len()).sum();
    let mean_reward = rewards.iter().flat_map(|r| &r.q).sum::<f64>() / n.max(1) as f64;
    Ok(PgStats {
        surrogate,
        mean_reward,
        grad_norm,
    })
}
