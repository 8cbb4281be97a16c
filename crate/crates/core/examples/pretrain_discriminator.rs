//! Trains the convolutional discriminator to tell oracle sentences from
//! samples of an untrained generator.
//!
//! `cargo run --release --example pretrain_discriminator`

use vgan::eval::{Evaluator, OracleTask};
use vgan::trainer::{pretrain_discriminator, Players};
use vgan::RunConfig;

fn main() -> vgan::Result<()> {
    let cfg = RunConfig::desk();
    let task = OracleTask::new(&cfg)?;
    let mut players = cfg.init_players(cfg.vocab_cap)?;
    let Players {
        generator,
        discriminator,
        d_adam,
        ..
    } = &mut players;
    for e in pretrain_discriminator(discriminator, d_adam, &task.train, generator, &cfg.disc_pretrain_options(), 5)? {
        println!("epoch {}  loss {:.4}  train accuracy {:.3}", e.epoch, e.loss, e.accuracy);
    }
    let eval = Evaluator::new(None, &task.test, task.test.len(), 11);
    let fakes = eval.samples(&players.generator, players.budget())?;
    println!("held-out accuracy {:.3}", eval.disc_accuracy(&players.discriminator, &fakes)?);
    Ok(())
}
