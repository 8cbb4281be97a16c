use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Corpus, OracleModel};
use crate::generator::Generator;
use crate::tensor::Real;
use crate::{stream_seed, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NllReport {
    /// Estimated `log p(sequence)` for every test sentence.
    pub logprobs: Vec<f64>,
    /// `−mean` of `logprobs`.
    pub per_sequence: f64,
    /// Total negative log-probability over all predicted tokens (E included).
    pub per_token: f64,
    pub n_z: usize,
}

/// Negative log-likelihood of the test sentences, each summed over tokens
/// and averaged over sentences. Token probabilities average `n_z` prior
/// latent draws per step; sentence `i` uses a stream derived from `seed` and `i`.
pub fn nll_report<T: Real>(g: &Generator<T>, test: &Corpus, n_z: usize, seed: u64) -> Result<NllReport> {
    if test.is_empty() {
        return Err(Error::Invalid("empty test corpus".into()));
    }
    let logprobs = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, i as u64));
            g.sequence_logprob(&test.framed(i), n_z, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = -logprobs.iter().sum::<f64>();
    let tokens: usize = test.sentences.iter().map(|s| s.len() + 1).sum();
    Ok(NllReport {
        per_sequence: total / logprobs.len() as f64,
        per_token: total / tokens as f64,
        logprobs,
        n_z,
    })
}

/// Oracle NLL of `n` generator samples of at most `budget` tokens.
pub fn oracle_nll_of_samples<T: Real>(
    g: &Generator<T>,
    oracle: &OracleModel,
    n: usize,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| Ok(g.sample_sequence(budget, 1.0, &mut rng)?.tokens))
        .collect::<Result<Vec<_>>>()?;
    oracle.nll(&samples)
}
