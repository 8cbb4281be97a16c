use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{batch_rewards, clip_and_step, per_item_gradients, pg_update, set_gradients, AdamState, Baseline};
use crate::data::{Checkpoint, Corpus};
use crate::discriminator::{Discriminator, LabeledBatch};
use crate::generator::Generator;
use crate::tensor::Real;
use crate::{stream_seed, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialConfig {
    pub rounds: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    /// Sequences sampled per generator update.
    pub pg_batch_size: usize,
    /// Real plus generated sequences per discriminator update.
    pub d_batch_size: usize,
    pub rollouts: usize,
    pub clip_norm: f64,
    /// Decay of the reward baseline; `None` disables it.
    pub baseline: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    Generator,
    Discriminator,
}

/// Averages over the updates of one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub mean_reward: f64,
    pub d_loss: f64,
}

/// Both models with their optimizer states.
#[derive(Clone, Debug)]
pub struct Players<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub g_adam: AdamState<T>,
    pub d_adam: AdamState<T>,
}

impl<T: Real> Players<T> {
    pub fn new(generator: Generator<T>, discriminator: Discriminator<T>, lr: f64) -> Self {
        let g_adam = AdamState::new(&generator.params, lr);
        let d_adam = AdamState::new(&discriminator.params, lr);
        Self {
            generator,
            discriminator,
            g_adam,
            d_adam,
        }
    }

    /// Number of tokens a generated sequence may hold: the discriminator length.
    pub fn budget(&self) -> usize {
        self.discriminator.config.seq_len
    }

    pub fn generator_checkpoint(&self, config: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(config);
        ck.push_params("gen.", &self.generator.params);
        self.g_adam.push_to(&mut ck, "gen_adam.", &self.generator.params);
        ck
    }

    pub fn discriminator_checkpoint(&self, config: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(config);
        ck.push_params("disc.", &self.discriminator.params);
        self.d_adam.push_to(&mut ck, "disc_adam.", &self.discriminator.params);
        ck
    }

    /// Loads generator weights and, when present, its optimizer state.
    pub fn load_generator(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_params("gen.", &mut self.generator.params)?;
        if let Some(adam) = AdamState::load_from(ck, "gen_adam.", &self.generator.params) {
            self.g_adam = adam;
        }
        Ok(())
    }

    pub fn load_discriminator(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_params("disc.", &mut self.discriminator.params)?;
        if let Some(adam) = AdamState::load_from(ck, "disc_adam.", &self.discriminator.params) {
            self.d_adam = adam;
        }
        Ok(())
    }

    /// One policy-gradient step on a fresh batch. Returns the mean reward.
    pub fn generator_step<R: Rng + ?Sized>(
        &mut self,
        cfg: &AdversarialConfig,
        baseline: Option<&mut Baseline>,
        rng: &mut R,
    ) -> Result<f64> {
        let budget = self.budget();
        let seqs = (0..cfg.pg_batch_size)
            .map(|_| self.generator.sample_sequence(budget, 1.0, rng))
            .collect::<Result<Vec<_>>>()?;
        let rewards = batch_rewards(&self.generator, &self.discriminator, &seqs, cfg.rollouts, budget, rng)?;
        let stats = pg_update(&mut self.generator, &mut self.g_adam, &seqs, &rewards, baseline, cfg.clip_norm)?;
        Ok(stats.mean_reward)
    }

    /// One discriminator step on real sentences and fresh samples in equal
    /// numbers. Returns the loss before the update.
    pub fn discriminator_step<R: Rng + ?Sized>(&mut self, cfg: &AdversarialConfig, real: &Corpus, rng: &mut R) -> Result<f64> {
        if real.is_empty() {
            return Err(Error::Invalid("empty training corpus".into()));
        }
        let half = (cfg.d_batch_size / 2).max(1);
        let budget = self.budget();
        let mut items = Vec::with_capacity(2 * half);
        for _ in 0..half {
            items.push((real.terminated(rng.random_range(0..real.len())), true));
        }
        for _ in 0..half {
            items.push((self.generator.sample_sequence(budget, 1.0, rng)?.tokens, false));
        }
        let inv = T::lit(1.0 / items.len() as f64);
        let d = &self.discriminator;
        let (grads, loss) = per_item_gradients(&items, |tape, (seq, label)| {
            let p = tape.bind(&d.params);
            let mut batch = LabeledBatch::default();
            batch.push(seq.clone(), *label);
            Ok(d.disc_loss(tape, &p, &batch)?.scale(inv)?)
        })?;
        set_gradients(&mut self.discriminator.params, &grads)?;
        clip_and_step(&mut self.discriminator.params, &mut self.d_adam, cfg.clip_norm)?;
        Ok(loss)
    }
}

/// Alternates `g_steps` generator updates with `d_steps` discriminator
/// updates for `cfg.rounds` rounds. `on_round` runs after every round and
/// sees the updated players. Returns the sequence of updates performed.
pub fn adversarial_loop<T: Real>(
    players: &mut Players<T>,
    real: &Corpus,
    cfg: &AdversarialConfig,
    seed: u64,
    mut on_round: impl FnMut(&RoundStats, &Players<T>) -> Result<()>,
) -> Result<Vec<UpdateKind>> {
    let mut updates = Vec::with_capacity(cfg.rounds * (cfg.g_steps + cfg.d_steps));
    let mut baseline = cfg.baseline.map(Baseline::new);
    for round in 1..=cfg.rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, round as u64));
        let mut reward = 0.0;
        for _ in 0..cfg.g_steps {
            reward += players.generator_step(cfg, baseline.as_mut(), &mut rng)?;
            updates.push(UpdateKind::Generator);
        }
        let mut d_loss = 0.0;
        for _ in 0..cfg.d_steps {
            d_loss += players.discriminator_step(cfg, real, &mut rng)?;
            updates.push(UpdateKind::Discriminator);
        }
        let stats = RoundStats {
            round,
            mean_reward: reward / cfg.g_steps.max(1) as f64,
            d_loss: d_loss / cfg.d_steps.max(1) as f64,
        };
        on_round(&stats, players)?;
    }
    Ok(updates)
}
