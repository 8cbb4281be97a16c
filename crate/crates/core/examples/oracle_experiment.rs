//! The whole pipeline on the synthetic oracle: generator pretraining,
//! discriminator pretraining, adversarial rounds and final metrics.
//!
//! `cargo run --release --example oracle_experiment -- [rounds]`

use vgan::eval::run_experiment;
use vgan::RunConfig;

fn main() -> vgan::Result<()> {
    let rounds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let cfg = RunConfig {
        rounds,
        ..RunConfig::desk()
    };
    let report = run_experiment(&cfg, None)?;
    print!("{}", report.log.to_csv());
    let show = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.3}"));
    println!(
        "oracle NLL of samples: {} after pretraining, {} after {rounds} rounds",
        show(report.pretrained.nll_oracle),
        show(report.final_snapshot.nll_oracle)
    );
    println!(
        "BLEU-2: {:.3} -> {:.3}",
        report.pretrained.bleu2, report.final_snapshot.bleu2
    );
    Ok(())
}
