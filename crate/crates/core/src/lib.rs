//! VGAN: a recurrent sequence generator with per-step Gaussian latent
//! variables, pretrained on a variational bound and then trained
//! adversarially against a convolutional discriminator by policy gradient
//! with Monte Carlo rollouts.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors, the gradient tape and a finite-difference checker
//! - [`nn`]: embedding, peephole LSTM, convolution + max-over-time pooling, dropout
//! - [`generator`] and [`discriminator`]: the two players
//! - [`trainer`]: Adam, pretraining, rollout rewards, policy-gradient updates
//!   and the adversarial loop
//! - [`data`]: vocabulary, corpora, checkpoints, the synthetic oracle
//! - [`eval`]: BLEU-2, likelihood reports and the experiment driver
//! - [`config`] and [`cli`]: the `key = value` run configuration and the
//!   `vgan` command line

pub mod cli;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod eval;
pub mod generator;
pub mod nn;
pub mod tensor;
pub mod trainer;

pub use config::RunConfig;
pub use data::{Checkpoint, Corpus, OracleModel, Vocab};
pub use discriminator::{DiscConfig, Discriminator};
pub use generator::{Generator, GeneratorConfig, SampledSequence};
pub use tensor::{Real, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Derives an independent stream seed from the run seed.
pub fn stream_seed(seed: u64, offset: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
