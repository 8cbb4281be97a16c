use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip_and_step, per_item_gradients, set_gradients, AdamState};
use crate::data::Corpus;
use crate::discriminator::{Discriminator, LabeledBatch};
use crate::generator::Generator;
use crate::nn::Mode;
use crate::tensor::Real;
use crate::{stream_seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
}

/// Training-mode bound averaged over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenEpoch {
    pub epoch: usize,
    /// Mean per-sentence negative bound.
    pub bound: f64,
    pub per_token: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscEpoch {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy on the epoch's real and generated sequences after the epoch.
    pub accuracy: f64,
}

/// Minimizes the negative variational bound by minibatch Adam.
pub fn pretrain_generator<T: Real>(
    g: &mut Generator<T>,
    adam: &mut AdamState<T>,
    corpus: &Corpus,
    opts: &PretrainOptions,
    seed: u64,
) -> Result<Vec<GenEpoch>> {
    if corpus.is_empty() {
        return Err(Error::Invalid("empty training corpus".into()));
    }
    let framed = corpus.framed_all();
    let mut trace = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch as u64));
        let mut order: Vec<usize> = (0..framed.len()).collect();
        order.shuffle(&mut rng);
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let items: Vec<(&[usize], u64)> = chunk.iter().map(|&i| (framed[i].as_slice(), rng.random())).collect();
            let inv = T::lit(1.0 / chunk.len() as f64);
            let model = &*g;
            let (grads, loss) = per_item_gradients(&items, |tape, &(seq, s)| {
                let p = tape.bind(&model.params);
                let mut r = ChaCha8Rng::seed_from_u64(s);
                Ok(model.elbo_loss(tape, &p, &[seq.to_vec()], Mode::Train, &mut r)?.scale(inv)?)
            })?;
            total += loss * chunk.len() as f64;
            tokens += chunk.iter().map(|&i| framed[i].len() - 1).sum::<usize>();
            set_gradients(&mut g.params, &grads)?;
            clip_and_step(&mut g.params, adam, opts.clip_norm)?;
        }
        trace.push(GenEpoch {
            epoch,
            bound: total / framed.len() as f64,
            per_token: total / tokens as f64,
        });
    }
    Ok(trace)
}

/// Trains `d` on real sentences against fresh samples of `g`, one sample per
/// real sentence per epoch, in batches with equal real and generated counts.
pub fn pretrain_discriminator<T: Real>(
    d: &mut Discriminator<T>,
    adam: &mut AdamState<T>,
    real: &Corpus,
    g: &Generator<T>,
    opts: &PretrainOptions,
    seed: u64,
) -> Result<Vec<DiscEpoch>> {
    if real.is_empty() {
        return Err(Error::Invalid("empty training corpus".into()));
    }
    let budget = d.config.seq_len;
    let half = (opts.batch_size / 2).max(1);
    let mut trace = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch as u64));
        let mut reals: Vec<Vec<usize>> = (0..real.len()).map(|i| real.terminated(i)).collect();
        let mut fakes = Vec::with_capacity(real.len());
        for _ in 0..real.len() {
            fakes.push(g.sample_sequence(budget, 1.0, &mut rng)?.tokens);
        }
        reals.shuffle(&mut rng);
        fakes.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for (r, f) in reals.chunks(half).zip(fakes.chunks(half)) {
            let mut items: Vec<(Vec<usize>, bool)> = r.iter().map(|s| (s.clone(), true)).collect();
            items.extend(f.iter().map(|s| (s.clone(), false)));
            let inv = T::lit(1.0 / items.len() as f64);
            let model = &*d;
            let (grads, loss) = per_item_gradients(&items, |tape, (seq, label)| {
                let p = tape.bind(&model.params);
                let mut batch = LabeledBatch::default();
                batch.push(seq.clone(), *label);
                Ok(model.disc_loss(tape, &p, &batch)?.scale(inv)?)
            })?;
            total += loss;
            count += 1;
            set_gradients(&mut d.params, &grads)?;
            clip_and_step(&mut d.params, adam, opts.clip_norm)?;
        }
        let mut eval = LabeledBatch::default();
        for s in reals {
            eval.push(s, true);
        }
        for s in fakes {
            eval.push(s, false);
        }
        trace.push(DiscEpoch {
            epoch,
            loss: total / count as f64,
            accuracy: d.accuracy(&eval)?,
        });
    }
    Ok(trace)
}
