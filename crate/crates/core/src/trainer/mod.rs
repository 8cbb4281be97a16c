//! Optimization for both players: Adam, pretraining, Monte Carlo rewards,
//! policy-gradient updates and the alternating adversarial loop.

mod adam;
mod adversarial;
mod metrics;
mod pg;
mod pretrain;
mod reward;

pub use adam::{clip_and_step, AdamState, BETA1, BETA2, EPSILON};
pub use adversarial::{adversarial_loop, AdversarialConfig, Players, RoundStats, UpdateKind};
pub use metrics::{MetricsLog, MetricsRow, CSV_HEADER};
pub use pg::{pg_gradient, pg_update, Baseline, PgStats};
pub use pretrain::{pretrain_discriminator, pretrain_generator, DiscEpoch, GenEpoch, PretrainOptions};
pub use reward::{batch_rewards, estimate_rewards, mc_q_estimate, RewardEstimate};

use rayon::prelude::*;

use crate::tensor::{Gradients, ParamSet, Real, Tape, Var};
use crate::Result;

/// Evaluates `loss` on its own tape for every item, in parallel, and returns
/// the gradients in item order together with the summed loss.
pub(crate) fn per_item_gradients<T, I, F>(items: &[I], loss: F) -> Result<(Vec<Gradients<T>>, f64)>
where
    T: Real,
    I: Sync,
    F: for<'t> Fn(&'t Tape<T>, &I) -> Result<Var<'t, T>> + Sync,
{
    let results = items
        .par_iter()
        .map(|item| {
            let tape = Tape::new();
            let l = loss(&tape, item)?;
            let value = l.item()?.as_f64();
            Ok((tape.backward(l)?, value))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = results.iter().map(|(_, v)| v).sum();
    Ok((results.into_iter().map(|(g, _)| g).collect(), total))
}

/// Replaces the stored gradients of `params` by the sum of `grads`.
pub(crate) fn set_gradients<T: Real>(params: &mut ParamSet<T>, grads: &[Gradients<T>]) -> Result<()> {
    params.zero_grad();
    for g in grads {
        g.accumulate_into(params)?;
    }
    Ok(())
}
