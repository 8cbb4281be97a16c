//! Checks the tape's gradient of a small generator's training loss against
//! central finite differences.
//!
//! `cargo run --release --example gradient_check`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vgan::data::{END, START};
use vgan::nn::Mode;
use vgan::tensor::{grad_check, TensorError};
use vgan::{Generator, GeneratorConfig};

fn main() -> vgan::Result<()> {
    let cfg = GeneratorConfig {
        vocab_size: 7,
        embed_dim: 3,
        hidden_dim: 4,
        latent_dim: 2,
        dropout: 0.5,
    };
    let mut g = Generator::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(1))?;
    // at the default init scale some gradients sit below what finite
    // differences can resolve
    for p in g.params.iter_mut() {
        for x in p.value_mut().data_mut() {
            *x *= 10.0;
        }
    }
    let batch = vec![vec![START, 4, 6, 5, END], vec![START, 3, END]];

    // the same seed every call freezes the latent noise and dropout masks
    let report = grad_check(&g.params, |tape, p| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        g.elbo_loss(tape, p, &batch, Mode::Train, &mut rng)
            .map_err(|e| TensorError::Contract(e.to_string()))
    })?;
    println!(
        "{} coordinates, worst relative error {:.2e} at {}",
        report.coordinates, report.max_rel_err, report.worst
    );
    Ok(())
}
