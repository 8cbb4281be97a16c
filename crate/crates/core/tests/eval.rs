mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vgan::config::streams;
use vgan::eval::{avg_bleu2, nll_report, run_experiment, OracleTask};
use vgan::tensor::ParamSet;
use vgan::trainer::{adversarial_loop, pretrain_discriminator, pretrain_generator, AdamState, Players, PretrainOptions};
use vgan::{Corpus, Generator, GeneratorConfig, RunConfig};

fn edit<T: vgan::Real>(ps: &mut ParamSet<T>, name: &str, f: impl Fn(usize) -> f64) {
    let id = ps.find(name).unwrap();
    for (i, x) in ps.get_mut(id).value_mut().data_mut().iter_mut().enumerate() {
        *x = T::lit(f(i));
    }
}

fn generator(vocab_size: usize, seed: u64) -> Generator<f64> {
    let cfg = GeneratorConfig {
        vocab_size,
        embed_dim: 4,
        hidden_dim: 8,
        latent_dim: 2,
        dropout: 0.0,
    };
    Generator::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn copying_generator_scores_one() {
    let mut g = generator(8, 1);
    edit(&mut g.params, "out.weight", |_| 0.0);
    edit(&mut g.params, "out.bias", |i| if i == 4 { 60.0 } else { 0.0 });
    let refs = vec![vec![4; 5], vec![5, 6, 7]];
    let results = avg_bleu2(&g, &refs, &[10, 20], 5, 3).unwrap();
    for r in &results {
        assert_eq!(r.mean, 1.0);
        assert!(r.scores.iter().all(|&s| s == 1.0));
    }
    assert_eq!((results[0].n_generated, results[1].n_generated), (10, 20));
}

#[test]
fn bleu_sampling_is_deterministic() {
    let g = generator(8, 2);
    let refs = vec![vec![4, 5, 6], vec![6, 7]];
    let a = avg_bleu2(&g, &refs, &[200], 6, 11).unwrap();
    let b = avg_bleu2(&g, &refs, &[200], 6, 11).unwrap();
    assert_eq!(a, b);
    let c = avg_bleu2(&g, &refs, &[200], 6, 12).unwrap();
    assert_ne!(a[0].scores, c[0].scores);
    assert!(a[0].scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn uniform_generator_has_log_support_per_token() {
    let mut g = generator(6, 3);
    edit(&mut g.params, "out.weight", |_| 0.0);
    edit(&mut g.params, "out.bias", |_| 0.0);
    // two words then E: three predicted tokens each
    let test = Corpus::from_ids(vec![vec![4, 5], vec![5, 5], vec![3, 4]], 10);
    let report = nll_report(&g, &test, 5, 4).unwrap();
    let want = 3.0 * (g.config.support_size() as f64).ln();
    assert!((report.per_sequence - want).abs() < 1e-12, "{} vs {want}", report.per_sequence);
    assert!((report.per_token - want / 3.0).abs() < 1e-12);
    assert_eq!(report.logprobs.len(), 3);
    assert_eq!(report.n_z, 5);
    assert!(nll_report(&g, &Corpus::from_ids(vec![], 10), 5, 4).is_err());
}

#[test]
fn longer_training_memorizes_a_sentence() {
    let cfg = GeneratorConfig {
        vocab_size: 9,
        embed_dim: 8,
        hidden_dim: 16,
        latent_dim: 2,
        dropout: 0.0,
    };
    let mut g = Generator::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let mut adam = AdamState::new(&g.params, 0.02);
    let corpus = Corpus::from_ids(vec![vec![4, 7, 5, 8, 6]; 32], 10);
    let once = Corpus::from_ids(vec![vec![4, 7, 5, 8, 6]], 10);
    let mut trace = vec![nll_report(&g, &once, 8, 6).unwrap().per_token];
    for stage in 0..4 {
        let opts = PretrainOptions {
            epochs: 50,
            batch_size: 32,
            clip_norm: 5.0,
        };
        pretrain_generator(&mut g, &mut adam, &corpus, &opts, stage).unwrap();
        trace.push(nll_report(&g, &once, 8, 6).unwrap().per_token);
    }
    assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
    assert!(*trace.last().unwrap() < 0.1, "{trace:?}");
}

#[test]
fn pretraining_beats_an_untrained_generator_on_bleu() {
    let cfg = RunConfig {
        oracle_sentences: 600,
        ..RunConfig::desk()
    };
    let task = OracleTask::new(&cfg).unwrap();
    let mut players = cfg.init_players(cfg.vocab_cap).unwrap();
    let budget = players.budget();
    let seed = cfg.stream(streams::EVAL);
    let before = avg_bleu2(&players.generator, &task.test.sentences, &[200], budget, seed).unwrap()[0].mean;
    let opts = PretrainOptions {
        epochs: 15,
        ..cfg.gen_pretrain_options()
    };
    pretrain_generator(&mut players.generator, &mut players.g_adam, &task.train, &opts, 8).unwrap();
    let after = avg_bleu2(&players.generator, &task.test.sentences, &[200], budget, seed).unwrap()[0].mean;
    assert!(after > before, "trained {after} vs untrained {before}");
}

#[test]
fn smoke_experiment_is_reproducible() {
    let cfg = RunConfig {
        hidden_dim: 8,
        embed_dim: 4,
        latent_dim: 2,
        disc_embed_dim: 4,
        disc_filters: 4,
        oracle_sentences: 150,
        pretrain_epochs: 2,
        disc_epochs: 1,
        rounds: 2,
        rollouts: 2,
        pg_batch_size: 4,
        g_steps: 1,
        d_steps: 1,
        eval_samples: 20,
        ..RunConfig::desk()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    assert!(first.log.phase("adversarial").count() >= 2);
    for f in ["metrics.csv", "samples.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let samples = std::fs::read_to_string(a.path().join("samples.txt")).unwrap();
    assert_eq!(samples.lines().count(), 20);
}

/// Test-set likelihood after pretraining against after the adversarial rounds.
/// Does not hold at desk scale: the rounds lower the oracle NLL of samples
/// but raise the test NLL slightly (15.58 to 15.93 nats per sentence, 15.61
/// with the reward baseline). Run with `--ignored` to see it.
#[test]
#[ignore = "test NLL rises after adversarial rounds at desk scale"]
fn adversarial_rounds_lower_test_nll() {
    let cfg = RunConfig::desk();
    let task = OracleTask::new(&cfg).unwrap();
    let mut players = cfg.init_players(cfg.vocab_cap).unwrap();
    let Players {
        generator,
        discriminator,
        g_adam,
        d_adam,
    } = &mut players;
    pretrain_generator(
        generator,
        g_adam,
        &task.train,
        &cfg.gen_pretrain_options(),
        cfg.stream(streams::PRETRAIN_GEN),
    )
    .unwrap();
    pretrain_discriminator(
        discriminator,
        d_adam,
        &task.train,
        generator,
        &cfg.disc_pretrain_options(),
        cfg.stream(streams::PRETRAIN_DISC),
    )
    .unwrap();
    let seed = cfg.stream(streams::EVAL);
    let pre = nll_report(&players.generator, &task.test, cfg.n_z, seed).unwrap();
    adversarial_loop(
        &mut players,
        &task.train,
        &cfg.adversarial_config(),
        cfg.stream(streams::ADVERSARIAL),
        |_, _| Ok(()),
    )
    .unwrap();
    let post = nll_report(&players.generator, &task.test, cfg.n_z, seed).unwrap();
    assert!(
        post.per_sequence < pre.per_sequence,
        "after adversarial {} vs after pretraining {}",
        post.per_sequence,
        pre.per_sequence
    );
}
