//! Saves both players with their optimizer state and restores them into
//! freshly built models.
//!
//! `cargo run --release --example checkpoints`

use vgan::{Checkpoint, RunConfig};

fn main() -> vgan::Result<()> {
    let cfg = RunConfig::desk();
    let players = cfg.init_players(cfg.vocab_cap)?;
    let dir = std::env::temp_dir().join("vgan-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(vgan::data::DataError::from)?;
    let path = dir.join("generator.ckpt");
    players.generator_checkpoint(&cfg.render()).save(&path)?;

    let ck = Checkpoint::load(&path)?;
    println!("{} tensors, {} bytes", ck.tensors.len(), std::fs::metadata(&path).map_err(vgan::data::DataError::from)?.len());
    let mut fresh = RunConfig { seed: 999, ..cfg.clone() }.init_players(cfg.vocab_cap)?;
    fresh.load_generator(&ck)?;
    let same = fresh
        .generator
        .params
        .iter()
        .zip(players.generator.params.iter())
        .all(|(a, b)| a.value() == b.value());
    println!("restored generator identical: {same}");
    println!("restored Adam state identical: {}", fresh.g_adam == players.g_adam);
    Ok(())
}
