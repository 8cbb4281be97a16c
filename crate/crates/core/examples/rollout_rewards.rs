//! Per-token rewards of one sampled sentence: every prefix is completed by
//! Monte Carlo rollouts and the completions are scored by the discriminator.
//!
//! `cargo run --release --example rollout_rewards`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vgan::eval::OracleTask;
use vgan::trainer::{estimate_rewards, pretrain_discriminator};
use vgan::RunConfig;

fn main() -> vgan::Result<()> {
    let cfg = RunConfig {
        oracle_sentences: 400,
        disc_epochs: 2,
        ..RunConfig::desk()
    };
    let task = OracleTask::new(&cfg)?;
    let mut p = cfg.init_players(cfg.vocab_cap)?;
    pretrain_discriminator(&mut p.discriminator, &mut p.d_adam, &task.train, &p.generator, &cfg.disc_pretrain_options(), 1)?;

    let budget = p.budget();
    let seq = p.generator.sample_sequence(budget, 1.0, &mut ChaCha8Rng::seed_from_u64(2))?;
    println!("sentence: {}", task.vocab.decode(&seq.tokens));
    for n in [1, 4, 16, 64] {
        let r = estimate_rewards(&p.generator, &p.discriminator, &seq.tokens, n, budget, 3)?;
        let qs: Vec<String> = r.q.iter().map(|q| format!("{q:.3}")).collect();
        println!("N = {n:2}: {}", qs.join(" "));
    }
    Ok(())
}
