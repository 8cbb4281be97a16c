//! Pretrains the generator on oracle sentences by minimizing the negative
//! variational bound, then prints samples and the test NLL.
//!
//! `cargo run --release --example pretrain_generator`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vgan::eval::{nll_report, OracleTask};
use vgan::trainer::{pretrain_generator, PretrainOptions};
use vgan::RunConfig;

fn main() -> vgan::Result<()> {
    let cfg = RunConfig {
        oracle_sentences: 600,
        ..RunConfig::desk()
    };
    let task = OracleTask::new(&cfg)?;
    let mut players = cfg.init_players(cfg.vocab_cap)?;
    let opts = PretrainOptions {
        epochs: 10,
        ..cfg.gen_pretrain_options()
    };
    let before = nll_report(&players.generator, &task.test, cfg.n_z, 0)?;
    for e in pretrain_generator(&mut players.generator, &mut players.g_adam, &task.train, &opts, 1)? {
        println!("epoch {:2}  bound {:.3}  per token {:.3}", e.epoch, e.bound, e.per_token);
    }
    let after = nll_report(&players.generator, &task.test, cfg.n_z, 0)?;
    println!("test NLL per sentence: {:.3} -> {:.3}", before.per_sequence, after.per_sequence);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let s = players.generator.sample_sequence(players.budget(), 1.0, &mut rng)?;
        println!("  {}", task.vocab.decode(&s.tokens));
    }
    Ok(())
}
