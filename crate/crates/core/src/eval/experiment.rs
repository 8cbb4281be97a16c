use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bleu::{score_sentences, BleuReferences};
use crate::config::{streams, RunConfig};
use crate::data::{Corpus, OracleModel, Vocab, END, NUM_SPECIALS};
use crate::discriminator::{Discriminator, LabeledBatch};
use crate::generator::Generator;
use crate::nn::Mode;
use crate::tensor::{Real, Tape};
use crate::trainer::{
    adversarial_loop, pretrain_discriminator, pretrain_generator, AdversarialConfig, MetricsLog, MetricsRow, Players,
    PretrainOptions, UpdateKind,
};
use crate::{stream_seed, Result};

/// Vocabulary for oracle corpora: the specials, then `w4`, `w5`, ...
pub fn oracle_vocab(size: usize) -> Vocab {
    Vocab::from_tokens((NUM_SPECIALS..size).map(|i| format!("w{i}")))
}

/// A synthetic corpus drawn from a seeded oracle, split into train and test.
#[derive(Clone, Debug)]
pub struct OracleTask {
    pub oracle: OracleModel,
    pub vocab: Vocab,
    pub train: Corpus,
    pub test: Corpus,
}

impl OracleTask {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let oracle = OracleModel::new(cfg.oracle_config())?;
        let corpus = oracle.generate(cfg.oracle_sentences, cfg.max_len, cfg.stream(streams::ORACLE_CORPUS))?;
        let (train, test) = corpus.split(cfg.split_ratio, cfg.stream(streams::SPLIT))?;
        Ok(Self {
            vocab: oracle_vocab(cfg.vocab_cap),
            oracle,
            train,
            test,
        })
    }
}

/// Metrics of a model snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    /// Evaluation-mode negative bound, mean per test sentence.
    pub elbo: f64,
    pub nll_oracle: Option<f64>,
    pub bleu2: f64,
    pub d_acc: f64,
}

/// Scores snapshots against a fixed test set with fixed random streams, so
/// successive snapshots differ only through the models.
pub struct Evaluator<'a> {
    pub oracle: Option<&'a OracleModel>,
    pub test: &'a Corpus,
    pub samples: usize,
    pub seed: u64,
    references: BleuReferences<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(oracle: Option<&'a OracleModel>, test: &'a Corpus, samples: usize, seed: u64) -> Self {
        Self {
            oracle,
            test,
            samples,
            seed,
            references: BleuReferences::new(&test.sentences),
        }
    }

    pub fn test_bound<T: Real>(&self, g: &Generator<T>) -> Result<f64> {
        let tape = Tape::no_grad();
        let p = tape.bind(&g.params);
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, 0));
        let loss = g.elbo_loss(&tape, &p, &self.test.framed_all(), Mode::Eval, &mut rng)?;
        Ok(loss.item()?.as_f64())
    }

    pub fn samples<T: Real>(&self, g: &Generator<T>, budget: usize) -> Result<Vec<Vec<usize>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, 1));
        (0..self.samples)
            .map(|_| Ok(g.sample_sequence(budget, 1.0, &mut rng)?.tokens))
            .collect()
    }

    /// Accuracy on test sentences against the same number of samples.
    pub fn disc_accuracy<T: Real>(&self, d: &Discriminator<T>, fakes: &[Vec<usize>]) -> Result<f64> {
        let mut batch = LabeledBatch::default();
        for i in 0..self.test.len().min(fakes.len()) {
            batch.push(self.test.terminated(i), true);
            batch.push(fakes[i].clone(), false);
        }
        d.accuracy(&batch)
    }

    pub fn snapshot<T: Real>(&self, players: &Players<T>) -> Result<Snapshot> {
        let g = &players.generator;
        let samples = self.samples(g, players.budget())?;
        let nll_oracle = match self.oracle {
            Some(o) => Some(o.nll(&samples)?),
            None => None,
        };
        let stripped: Vec<Vec<usize>> = samples
            .iter()
            .map(|s| s.iter().copied().filter(|&t| t != END).collect())
            .collect();
        Ok(Snapshot {
            elbo: self.test_bound(g)?,
            nll_oracle,
            bleu2: score_sentences(&stripped, &self.references).mean,
            d_acc: self.disc_accuracy(&players.discriminator, &samples)?,
        })
    }

    pub fn row(&self, phase: &str, round: usize, step: usize, snap: &Snapshot) -> MetricsRow {
        MetricsRow {
            elbo: Some(snap.elbo),
            nll_oracle: snap.nll_oracle,
            bleu2: Some(snap.bleu2),
            d_acc: Some(snap.d_acc),
            ..MetricsRow::new(phase, round, step)
        }
    }
}

/// Outcome of [`run_experiment`].
pub struct ExperimentReport {
    pub log: MetricsLog,
    /// Metrics after both pretraining stages, before any adversarial round.
    pub pretrained: Snapshot,
    /// Metrics after the last adversarial round.
    pub final_snapshot: Snapshot,
    pub updates: Vec<UpdateKind>,
    pub players: Players<f32>,
    pub task: OracleTask,
}

impl RunConfig {
    pub fn adversarial_config(&self) -> AdversarialConfig {
        AdversarialConfig {
            rounds: self.rounds,
            g_steps: self.g_steps,
            d_steps: self.d_steps,
            pg_batch_size: self.pg_batch_size,
            d_batch_size: self.batch_size,
            rollouts: self.rollouts,
            clip_norm: self.clip_norm,
            baseline: self.baseline.then_some(self.baseline_decay),
        }
    }

    pub fn gen_pretrain_options(&self) -> PretrainOptions {
        PretrainOptions {
            epochs: self.pretrain_epochs,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
        }
    }

    pub fn disc_pretrain_options(&self) -> PretrainOptions {
        PretrainOptions {
            epochs: self.disc_epochs,
            ..self.gen_pretrain_options()
        }
    }

    /// Freshly initialized players for a vocabulary of `vocab_size`.
    pub fn init_players(&self, vocab_size: usize) -> Result<Players<f32>> {
        let g = Generator::new(
            self.generator_config(vocab_size),
            &mut ChaCha8Rng::seed_from_u64(self.stream(streams::GEN_INIT)),
        )?;
        let d = Discriminator::new(
            self.disc_config(vocab_size),
            &mut ChaCha8Rng::seed_from_u64(self.stream(streams::DISC_INIT)),
        )?;
        Ok(Players::new(g, d, self.lr))
    }
}

/// Oracle task end to end: generator pretraining, discriminator pretraining,
/// adversarial rounds with a metrics row after each, and final samples.
/// With `out_dir`, writes `metrics.csv` and `samples.txt` there.
pub fn run_experiment(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    let task = OracleTask::new(cfg)?;
    let mut players = cfg.init_players(cfg.vocab_cap)?;
    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(crate::data::DataError::from)?;
            MetricsLog::create(&dir.join("metrics.csv"))?
        }
        None => MetricsLog::in_memory(),
    };
    let eval = Evaluator::new(Some(&task.oracle), &task.test, cfg.eval_samples, cfg.stream(streams::EVAL));

    let Players {
        generator,
        discriminator,
        g_adam,
        d_adam,
    } = &mut players;
    let gen_trace = pretrain_generator(
        generator,
        g_adam,
        &task.train,
        &cfg.gen_pretrain_options(),
        cfg.stream(streams::PRETRAIN_GEN),
    )?;
    for e in &gen_trace {
        log.append(MetricsRow {
            elbo: Some(e.bound),
            ..MetricsRow::new("pretrain_gen", 0, e.epoch)
        })?;
    }
    let disc_trace = pretrain_discriminator(
        discriminator,
        d_adam,
        &task.train,
        generator,
        &cfg.disc_pretrain_options(),
        cfg.stream(streams::PRETRAIN_DISC),
    )?;
    for e in &disc_trace {
        log.append(MetricsRow {
            d_loss: Some(e.loss),
            d_acc: Some(e.accuracy),
            ..MetricsRow::new("pretrain_disc", 0, e.epoch)
        })?;
    }

    let pretrained = eval.snapshot(&players)?;
    log.append(eval.row("adversarial", 0, 0, &pretrained))?;
    let adv = cfg.adversarial_config();
    let mut last = pretrained;
    let updates = adversarial_loop(
        &mut players,
        &task.train,
        &adv,
        cfg.stream(streams::ADVERSARIAL),
        |stats, p| {
            last = eval.snapshot(p)?;
            let row = MetricsRow {
                d_loss: Some(stats.d_loss),
                mean_reward: Some(stats.mean_reward),
                ..eval.row("adversarial", stats.round, stats.round * (adv.g_steps + adv.d_steps), &last)
            };
            log.append(row)?;
            Ok(())
        },
    )?;

    if let Some(dir) = out_dir {
        let mut text = String::new();
        for s in eval.samples(&players.generator, players.budget())? {
            text.push_str(&task.vocab.decode(&s));
            text.push('\n');
        }
        std::fs::write(dir.join("samples.txt"), text).map_err(crate::data::DataError::from)?;
    }
    Ok(ExperimentReport {
        log,
        pretrained,
        final_snapshot: last,
        updates,
        players,
        task,
    })
}
