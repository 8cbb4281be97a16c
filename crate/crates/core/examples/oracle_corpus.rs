//! Builds the synthetic oracle, draws a corpus from it and scores the
//! corpus with the oracle's exact likelihood.
//!
//! `cargo run --release --example oracle_corpus`

use vgan::eval::OracleTask;
use vgan::RunConfig;

fn main() -> vgan::Result<()> {
    let cfg = RunConfig {
        oracle_sentences: 500,
        ..RunConfig::desk()
    };
    let task = OracleTask::new(&cfg)?;
    println!("{} train / {} test sentences", task.train.len(), task.test.len());
    for s in task.train.sentences.iter().take(5) {
        println!("  {}", task.vocab.decode(s));
    }
    let own: Vec<Vec<usize>> = (0..task.test.len()).map(|i| task.test.terminated(i)).collect();
    println!(
        "oracle NLL of held-out sentences: {:.3} per sentence, {:.3} per token (uniform would be {:.3})",
        task.oracle.nll(&own)?,
        task.oracle.nll_per_token(&own)?,
        ((cfg.vocab_cap - 2) as f64).ln()
    );
    Ok(())
}
