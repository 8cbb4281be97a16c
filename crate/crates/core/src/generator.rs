//! The latent-variable recurrent generator.
//!
//! The LSTM recurrence is deterministic in the input tokens. At step `t` the
//! prior over `z_t` is a diagonal Gaussian computed from `h_{t-1}`, the
//! approximate posterior one computed from `[v_t ⊕ h_t]`, and the next-token
//! distribution is `softmax(out_proj([h_t ⊕ z_t]))` restricted to the
//! emittable tokens (every id except PAD and S).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{END, PAD, START};
use crate::nn::{dropout, dropout_mask, EmbeddingTable, Linear, LstmCell, Mode};
use crate::tensor::{Bound, ParamSet, Real, Tape, Tensor, TensorError, Var};
use crate::{Error, Result};

/// `log σ²` is clamped to `[-LOG_VAR_LIMIT, LOG_VAR_LIMIT]`.
pub const LOG_VAR_LIMIT: f64 = 10.0;

/// Lowest token id that can be emitted; PAD and S sit below it.
pub const FIRST_EMITTABLE: usize = END;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Dropout applied to `h_t` before the output projection in training mode.
    pub dropout: f64,
}

impl GeneratorConfig {
    /// Number of tokens in the output distribution.
    pub fn support_size(&self) -> usize {
        self.vocab_size - FIRST_EMITTABLE
    }
}

/// Mean and log-variance of a diagonal Gaussian.
#[derive(Clone, Copy, Debug)]
pub struct GaussianParams<'t, T> {
    pub mu: Var<'t, T>,
    pub log_var: Var<'t, T>,
}

/// `z = μ + exp(½ log σ²) ⊙ ε`.
pub fn reparam_sample<'t, T: Real>(g: GaussianParams<'t, T>, eps: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
    let sigma = g.log_var.scale(T::lit(0.5))?.exp()?;
    g.mu.add(sigma.mul(eps)?)
}

/// Closed-form `KL(q ‖ p)` between diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gauss<'t, T: Real>(
    q: GaussianParams<'t, T>,
    p: GaussianParams<'t, T>,
) -> Result<Var<'t, T>, TensorError> {
    // ½ (lv_p − lv_q) + (exp(lv_q) + (μ_q − μ_p)²) · exp(−lv_p) / 2 − ½
    let half = T::lit(0.5);
    let log_ratio = p.log_var.sub(q.log_var)?.scale(half)?;
    let diff = q.mu.sub(p.mu)?;
    let spread = q.log_var.exp()?.add(diff.mul(diff)?)?;
    let inv_p = p.log_var.neg()?.exp()?;
    log_ratio
        .add(spread.mul(inv_p)?.scale(half)?)?
        .add_scalar(-half)?
        .sum()
}

/// A sequence drawn from the generator, starting after S.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSequence<T> {
    pub tokens: Vec<usize>,
    /// `log G(y_t | y_<t)` under the latent path actually drawn.
    pub logprobs: Vec<T>,
    /// True when the last token is E.
    pub finished: bool,
    /// Standard-normal noise behind each step's prior latent.
    pub noise: Vec<Tensor<T>>,
}

/// Recurrent state after consuming a prefix: `(h, c)` and the next input.
#[derive(Clone, Debug)]
pub struct Cursor<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    pub input: usize,
}

/// Per-sequence loss pieces, averaged over the batch.
#[derive(Clone, Copy, Debug)]
pub struct ElboTerms<'t, T> {
    /// `kl + reconstruction`
    pub loss: Var<'t, T>,
    pub kl: Var<'t, T>,
    pub reconstruction: Var<'t, T>,
    /// Predicted tokens in the batch (E included).
    pub tokens: usize,
}

#[derive(Clone, Debug)]
pub struct Generator<T> {
    pub params: ParamSet<T>,
    pub config: GeneratorConfig,
    pub embedding: EmbeddingTable,
    pub cell: LstmCell,
    pub prior_net: Linear,
    pub posterior_net: Linear,
    pub out_proj: Linear,
}

impl<T: Real> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        if config.vocab_size <= FIRST_EMITTABLE + 1 {
            return Err(Error::Invalid(format!("vocab size {} too small", config.vocab_size)));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut params = ParamSet::new();
        let (q, l, dz, v) = (config.embed_dim, config.hidden_dim, config.latent_dim, config.vocab_size);
        let embedding = EmbeddingTable::new(&mut params, "embedding", q, v, rng)?;
        let cell = LstmCell::new(&mut params, "lstm", q, l, rng)?;
        let prior_net = Linear::new(&mut params, "prior", l, 2 * dz, rng)?;
        let posterior_net = Linear::new(&mut params, "posterior", q + l, 2 * dz, rng)?;
        let out_proj = Linear::new(&mut params, "out", l + dz, v, rng)?;
        Ok(Self {
            params,
            config,
            embedding,
            cell,
            prior_net,
            posterior_net,
            out_proj,
        })
    }

    fn split_gaussian<'t>(&self, out: Var<'t, T>) -> Result<GaussianParams<'t, T>, TensorError> {
        let dz = self.config.latent_dim;
        let lim = T::lit(LOG_VAR_LIMIT);
        Ok(GaussianParams {
            mu: out.slice(0, dz)?,
            log_var: out.slice(dz, dz)?.clamp(-lim, lim)?,
        })
    }

    /// Prior `p(z_t | h_{t-1})`.
    pub fn prior_params<'t>(&self, p: &Bound<'t, T>, h_prev: Var<'t, T>) -> Result<GaussianParams<'t, T>, TensorError> {
        self.split_gaussian(self.prior_net.forward(p, h_prev)?)
    }

    /// Approximate posterior `q(z_t | x_t, h_t)`.
    pub fn posterior_params<'t>(
        &self,
        p: &Bound<'t, T>,
        v_t: Var<'t, T>,
        h_t: Var<'t, T>,
    ) -> Result<GaussianParams<'t, T>, TensorError> {
        let input = Var::concat(&[v_t, h_t])?;
        self.split_gaussian(self.posterior_net.forward(p, input)?)
    }

    /// Log-probabilities over the emittable tokens; index `i` is token
    /// `i + FIRST_EMITTABLE`.
    pub fn step_log_probs<'t>(
        &self,
        p: &Bound<'t, T>,
        h_t: Var<'t, T>,
        z_t: Var<'t, T>,
    ) -> Result<Var<'t, T>, TensorError> {
        let logits = self.out_proj.forward(p, Var::concat(&[h_t, z_t])?)?;
        logits.slice(FIRST_EMITTABLE, self.config.support_size())?.log_softmax()
    }

    /// `softmax(out_proj([h ⊕ z]))` over the emittable tokens.
    pub fn step_output_dist<'t>(
        &self,
        p: &Bound<'t, T>,
        h_t: Var<'t, T>,
        z_t: Var<'t, T>,
    ) -> Result<Var<'t, T>, TensorError> {
        self.step_log_probs(p, h_t, z_t)?.exp()
    }

    /// Advances the recurrence by one input token.
    pub fn advance<'t>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        h: Var<'t, T>,
        c: Var<'t, T>,
        input: usize,
    ) -> Result<(Var<'t, T>, Var<'t, T>, Var<'t, T>), TensorError> {
        let v = self.embedding.embed(tape, p, input)?;
        let (h, c) = self.cell.step(p, v, h, c)?;
        Ok((v, h, c))
    }

    fn gaussian_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor<T> {
        Tensor::vector(
            (0..self.config.latent_dim)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect(),
        )
    }

    /// KL and reconstruction sums of one framed sequence. `noise` supplies
    /// the posterior `ε` and an optional dropout mask for each step.
    fn sequence_terms<'t>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        seq: &[usize],
        noise: &mut dyn FnMut() -> (Tensor<T>, Option<Tensor<T>>),
    ) -> Result<(Var<'t, T>, Var<'t, T>, usize)> {
        let seq = unframe(seq)?;
        let (mut h, mut c) = self.cell.zero_state(tape)?;
        let mut kl = tape.scalar(T::zero())?;
        let mut rec = tape.scalar(T::zero())?;
        for t in 0..seq.len() - 1 {
            let prior = self.prior_params(p, h)?;
            let (v, h_t, c_t) = self.advance(tape, p, h, c, seq[t])?;
            let post = self.posterior_params(p, v, h_t)?;
            let (eps, mask) = noise();
            let z = reparam_sample(post, tape.constant(eps)?)?;
            let h_out = match mask {
                Some(m) => dropout(h_t, self.config.dropout, Mode::Train, &m)?,
                None => h_t,
            };
            let target = emit_index(seq[t + 1], self.config.vocab_size)?;
            let nll = self.step_log_probs(p, h_out, z)?.pick(target)?.neg()?;
            kl = kl.add(kl_diag_gauss(post, prior)?)?;
            rec = rec.add(nll)?;
            h = h_t;
            c = c_t;
        }
        Ok((kl, rec, seq.len() - 1))
    }

    /// Negative variational bound, averaged over the batch.
    ///
    /// Every sequence must be `S ids.. E`, optionally followed by PAD. For each
    /// step the KL between posterior and prior is added to the negative log
    /// probability of the next token under one reparameterized posterior
    /// sample. Noise (`ε` then, in training mode, the dropout mask) is drawn
    /// from `rng` step by step.
    pub fn elbo<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        batch: &[Vec<usize>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<ElboTerms<'t, T>> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let drop = mode == Mode::Train && self.config.dropout > 0.0;
        let mut kl_total = tape.scalar(T::zero())?;
        let mut rec_total = tape.scalar(T::zero())?;
        let mut tokens = 0;
        for seq in batch {
            let mut noise = || {
                let eps = self.gaussian_noise(rng);
                let mask = drop.then(|| dropout_mask(rng, self.config.hidden_dim, self.config.dropout));
                (eps, mask)
            };
            let (kl, rec, n) = self.sequence_terms(tape, p, seq, &mut noise)?;
            kl_total = kl_total.add(kl)?;
            rec_total = rec_total.add(rec)?;
            tokens += n;
        }
        let inv = T::one() / T::lit(batch.len() as f64);
        let kl = kl_total.scale(inv)?;
        let reconstruction = rec_total.scale(inv)?;
        Ok(ElboTerms {
            loss: kl.add(reconstruction)?,
            kl,
            reconstruction,
            tokens,
        })
    }

    /// Evaluation-mode negative bound of one framed sequence with the
    /// posterior noise given explicitly, one `ε` per predicted token.
    pub fn elbo_with_noise<'t>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        seq: &[usize],
        eps: &[Tensor<T>],
    ) -> Result<ElboTerms<'t, T>> {
        let steps = unframe(seq)?.len() - 1;
        if eps.len() != steps {
            return Err(Error::Invalid(format!("{steps} steps but {} noise vectors", eps.len())));
        }
        let mut it = eps.iter().cloned();
        let mut noise = || (it.next().expect("length checked"), None);
        let (kl, reconstruction, tokens) = self.sequence_terms(tape, p, seq, &mut noise)?;
        Ok(ElboTerms {
            loss: kl.add(reconstruction)?,
            kl,
            reconstruction,
            tokens,
        })
    }

    /// Scalar loss of [`Generator::elbo`].
    pub fn elbo_loss<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        batch: &[Vec<usize>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        Ok(self.elbo(tape, p, batch, mode, rng)?.loss)
    }

    pub fn start(&self) -> Cursor<T> {
        Cursor {
            h: Tensor::zeros(&[self.config.hidden_dim]),
            c: Tensor::zeros(&[self.config.hidden_dim]),
            input: START,
        }
    }

    /// Cursors after each prefix `tokens[..k]` for `k = 0..=tokens.len()`.
    pub fn cursors(&self, tokens: &[usize]) -> Result<Vec<Cursor<T>>> {
        let tape = Tape::no_grad();
        let p = tape.bind(&self.params);
        let mut out = Vec::with_capacity(tokens.len() + 1);
        let start = self.start();
        let (mut h, mut c) = self.cell.zero_state(&tape)?;
        out.push(start);
        let mut input = START;
        for &tok in tokens {
            let (_, h2, c2) = self.advance(&tape, &p, h, c, input)?;
            h = h2;
            c = c2;
            input = tok;
            out.push(Cursor {
                h: (*h.value()).clone(),
                c: (*c.value()).clone(),
                input,
            });
        }
        Ok(out)
    }

    /// Ancestral sampling from S with prior latents, until E or `max_len` tokens.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, max_len: usize, temperature: f64, rng: &mut R) -> Result<SampledSequence<T>> {
        self.continue_from(&self.start(), &[], max_len, temperature, rng)
    }

    /// Samples the remainder of a sequence whose first tokens are `prefix`
    /// and whose recurrent state is `cursor`.
    pub fn continue_from<R: Rng + ?Sized>(
        &self,
        cursor: &Cursor<T>,
        prefix: &[usize],
        max_len: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<SampledSequence<T>> {
        if max_len == 0 {
            return Err(Error::Invalid("max_len must be at least 1".into()));
        }
        if temperature <= 0.0 {
            return Err(Error::Invalid(format!("temperature {temperature} must be positive")));
        }
        let mut seq = SampledSequence {
            tokens: prefix.to_vec(),
            logprobs: Vec::new(),
            finished: prefix.last() == Some(&END),
            noise: Vec::new(),
        };
        if seq.finished || prefix.len() >= max_len {
            return Ok(seq);
        }
        let tape = Tape::no_grad();
        let p = tape.bind(&self.params);
        let mut h = tape.constant(cursor.h.clone())?;
        let mut c = tape.constant(cursor.c.clone())?;
        let mut input = cursor.input;
        let inv_temp = T::lit(1.0 / temperature);
        while seq.tokens.len() < max_len {
            let prior = self.prior_params(&p, h)?;
            let (_, h_t, c_t) = self.advance(&tape, &p, h, c, input)?;
            let noise = self.gaussian_noise(rng);
            let z = reparam_sample(prior, tape.constant(noise.clone())?)?;
            let mut log_probs = self.step_log_probs(&p, h_t, z)?;
            if inv_temp != T::one() {
                log_probs = log_probs.scale(inv_temp)?.log_softmax()?;
            }
            let lp = log_probs.value();
            let idx = sample_index(lp.data(), rng);
            let token = idx + FIRST_EMITTABLE;
            seq.tokens.push(token);
            seq.logprobs.push(lp.data()[idx]);
            seq.noise.push(noise);
            h = h_t;
            c = c_t;
            input = token;
            if token == END {
                seq.finished = true;
                break;
            }
        }
        Ok(seq)
    }

    /// Completes `prefix` by sampling. A prefix that already ends in E, or has
    /// reached `max_len`, is returned unchanged.
    pub fn rollout<R: Rng + ?Sized>(&self, prefix: &[usize], max_len: usize, rng: &mut R) -> Result<Vec<usize>> {
        if prefix.len() > max_len {
            return Err(Error::Invalid(format!(
                "prefix of length {} exceeds max_len {max_len}",
                prefix.len()
            )));
        }
        let cursor = self.cursors(prefix)?.pop().expect("at least the start cursor");
        Ok(self.continue_from(&cursor, prefix, max_len, 1.0, rng)?.tokens)
    }

    /// Replays `tokens` (sampled after S) with the recorded prior noise and
    /// returns `Σ_t weight_t · log G(y_t | y_<t)` on the tape.
    pub fn weighted_log_likelihood<'t>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        tokens: &[usize],
        noise: &[Tensor<T>],
        weights: &[T],
    ) -> Result<Var<'t, T>> {
        if noise.len() != tokens.len() || weights.len() != tokens.len() {
            return Err(Error::Invalid(format!(
                "{} tokens but {} noise vectors and {} weights",
                tokens.len(),
                noise.len(),
                weights.len()
            )));
        }
        let (mut h, mut c) = self.cell.zero_state(tape)?;
        let mut input = START;
        let mut total = tape.scalar(T::zero())?;
        for ((&tok, eps), &w) in tokens.iter().zip(noise).zip(weights) {
            let prior = self.prior_params(p, h)?;
            let (_, h_t, c_t) = self.advance(tape, p, h, c, input)?;
            let z = reparam_sample(prior, tape.constant(eps.clone())?)?;
            let idx = emit_index(tok, self.config.vocab_size)?;
            let lp = self.step_log_probs(p, h_t, z)?.pick(idx)?;
            total = total.add(lp.scale(w)?)?;
            h = h_t;
            c = c_t;
            input = tok;
        }
        Ok(total)
    }

    /// `Σ_t log Ĝ(y_t | y_<t)` for a framed sequence, where each step's
    /// token probability is averaged over `n_z` prior latent draws.
    pub fn sequence_logprob<R: Rng + ?Sized>(&self, seq: &[usize], n_z: usize, rng: &mut R) -> Result<f64> {
        if n_z == 0 {
            return Err(Error::Invalid("n_z must be at least 1".into()));
        }
        let seq = unframe(seq)?;
        let tape = Tape::no_grad();
        let p = tape.bind(&self.params);
        let (mut h, mut c) = self.cell.zero_state(&tape)?;
        let mut total = 0.0;
        let mut draws = vec![0.0; n_z];
        for t in 0..seq.len() - 1 {
            let target = emit_index(seq[t + 1], self.config.vocab_size)?;
            let prior = self.prior_params(&p, h)?;
            let (_, h_t, c_t) = self.advance(&tape, &p, h, c, seq[t])?;
            for d in draws.iter_mut() {
                let eps = tape.constant(self.gaussian_noise(rng))?;
                let z = reparam_sample(prior, eps)?;
                *d = self.step_log_probs(&p, h_t, z)?.value().data()[target].as_f64();
            }
            total += log_mean_exp(&draws);
            h = h_t;
            c = c_t;
        }
        Ok(total)
    }
}

/// Validates `S .. E [PAD..]` framing and returns the slice up to and including E.
pub fn unframe(seq: &[usize]) -> Result<&[usize]> {
    if seq.first() != Some(&START) {
        return Err(Error::Invalid("sequence does not start with S".into()));
    }
    let end = seq
        .iter()
        .position(|&t| t == END)
        .ok_or_else(|| Error::Invalid("sequence has no E token".into()))?;
    if seq[end + 1..].iter().any(|&t| t != PAD) {
        return Err(Error::Invalid("tokens after E must be PAD".into()));
    }
    if seq[1..end].iter().any(|&t| t == START || t == PAD) {
        return Err(Error::Invalid("S or PAD inside a sequence".into()));
    }
    Ok(&seq[..=end])
}

/// Output-distribution index of an emittable token.
pub fn emit_index(token: usize, vocab_size: usize) -> Result<usize, TensorError> {
    if token < FIRST_EMITTABLE || token >= vocab_size {
        return Err(TensorError::Index {
            index: token,
            len: vocab_size,
        });
    }
    Ok(token - FIRST_EMITTABLE)
}

/// Inverse-CDF draw from a vector of log-probabilities.
pub fn sample_index<T: Real, R: Rng + ?Sized>(log_probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.as_f64().exp();
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass; take the last positive entry
    log_probs
        .iter()
        .rposition(|lp| lp.as_f64() > f64::NEG_INFINITY)
        .unwrap_or(log_probs.len() - 1)
}

pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + (s / xs.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Generator<f64> {
        let cfg = GeneratorConfig {
            vocab_size: 7,
            embed_dim: 3,
            hidden_dim: 4,
            latent_dim: 2,
            dropout: 0.0,
        };
        Generator::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    fn zero(g: &mut Generator<f64>, id: crate::tensor::ParamId) {
        g.params.get_mut(id).value_mut().fill(0.0);
    }

    #[test]
    fn zero_prior_net_is_standard_normal() {
        let mut g = tiny();
        let id = g.prior_net.weight;
        zero(&mut g, id);
        let tape = Tape::new();
        let p = tape.bind(&g.params);
        let h = tape.constant(Tensor::vector(vec![0.3, -0.2, 0.9, 0.1])).unwrap();
        let prior = g.prior_params(&p, h).unwrap();
        assert!(prior.mu.value().data().iter().all(|&x| x == 0.0));
        assert!(prior.log_var.value().data().iter().all(|&x| x == 0.0));
        let again = g.prior_params(&p, h).unwrap();
        assert_eq!(prior.mu.value(), again.mu.value());
    }

    #[test]
    fn zero_posterior_net_is_standard_normal() {
        let mut g = tiny();
        let id = g.posterior_net.weight;
        zero(&mut g, id);
        let tape = Tape::new();
        let p = tape.bind(&g.params);
        let v = tape.constant(Tensor::vector(vec![0.1, 0.2, 0.3])).unwrap();
        let h = tape.constant(Tensor::vector(vec![0.3, -0.2, 0.9, 0.1])).unwrap();
        let post = g.posterior_params(&p, v, h).unwrap();
        assert!(post.mu.value().data().iter().all(|&x| x == 0.0));
        assert!(post.log_var.value().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn log_var_is_clamped() {
        let mut g = tiny();
        g.params.get_mut(g.prior_net.bias).value_mut().fill(50.0);
        let tape = Tape::new();
        let p = tape.bind(&g.params);
        let h = tape.constant(Tensor::zeros(&[4])).unwrap();
        let prior = g.prior_params(&p, h).unwrap();
        assert!(prior.log_var.value().data().iter().all(|&x| x == LOG_VAR_LIMIT));
    }

    #[test]
    fn reparam_edge_cases() {
        let tape = Tape::<f64>::new();
        let mu = tape.constant(Tensor::vector(vec![0.5, -1.0])).unwrap();
        let lv = tape.constant(Tensor::vector(vec![0.3, 2.0])).unwrap();
        let zero = tape.constant(Tensor::zeros(&[2])).unwrap();
        let z = reparam_sample(GaussianParams { mu, log_var: lv }, zero).unwrap();
        assert_eq!(z.value().data(), &[0.5, -1.0]);

        let eps = tape.constant(Tensor::vector(vec![1.5, -0.25])).unwrap();
        let z = reparam_sample(GaussianParams { mu: zero, log_var: zero }, eps).unwrap();
        assert_eq!(z.value().data(), &[1.5, -0.25]);
    }

    #[test]
    fn kl_closed_form_cases() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::vector(vec![0.4, -0.7])).unwrap();
        let b = tape.constant(Tensor::vector(vec![-1.2, 0.3])).unwrap();
        let g = GaussianParams { mu: a, log_var: b };
        assert_eq!(kl_diag_gauss(g, g).unwrap().item().unwrap(), 0.0);

        let one = tape.constant(Tensor::vector(vec![1.0])).unwrap();
        let zero = tape.constant(Tensor::vector(vec![0.0])).unwrap();
        let kl = kl_diag_gauss(
            GaussianParams { mu: one, log_var: zero },
            GaussianParams { mu: zero, log_var: zero },
        )
        .unwrap();
        assert_eq!(kl.item().unwrap(), 0.5);
    }

    #[test]
    fn zero_projection_is_uniform() {
        let mut g = tiny();
        let id = g.out_proj.weight;
        zero(&mut g, id);
        let tape = Tape::new();
        let p = tape.bind(&g.params);
        let h = tape.constant(Tensor::vector(vec![0.3, -0.2, 0.9, 0.1])).unwrap();
        let z = tape.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let dist = g.step_output_dist(&p, h, z).unwrap().value();
        assert_eq!(dist.len(), 5);
        for &x in dist.data() {
            assert!((x - 0.2).abs() < 1e-15);
        }
        let lp = g.step_log_probs(&p, h, z).unwrap().value();
        assert!((lp.data()[0] + 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn forced_end_gives_single_token() {
        let mut g = tiny();
        let bias = g.out_proj.bias;
        g.params.get_mut(bias).value_mut().data_mut()[END] = 1000.0;
        let s = g.sample_sequence(5, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.tokens, vec![END]);
        assert!(s.finished);
    }

    #[test]
    fn max_len_one_gives_one_token() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s = g.sample_sequence(1, 1.0, &mut rng).unwrap();
            assert_eq!(s.tokens.len(), 1);
            assert_eq!(s.logprobs.len(), 1);
        }
    }

    #[test]
    fn samples_never_contain_start_or_pad() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let s = g.sample_sequence(6, 1.0, &mut rng).unwrap();
            assert_eq!(s.tokens.len(), s.logprobs.len());
            assert!(s.tokens.iter().all(|&t| t != START && t != PAD));
            let ends = s.tokens.iter().filter(|&&t| t == END).count();
            assert!(ends <= 1);
            if ends == 1 {
                assert_eq!(*s.tokens.last().unwrap(), END);
            }
        }
    }

    #[test]
    fn rollout_of_finished_prefix_is_identity() {
        let g = tiny();
        let prefix = vec![4, 5, END];
        let out = g.rollout(&prefix, 6, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out, prefix);
        assert!(g.rollout(&[4; 7], 6, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn uniform_model_logprob() {
        let mut g = tiny();
        let id = g.out_proj.weight;
        zero(&mut g, id);
        let lp = g
            .sequence_logprob(&[START, 4, 5, END], 3, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!((lp + 3.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn elbo_errors() {
        let g = tiny();
        let tape = Tape::new();
        let p = tape.bind(&g.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(g.elbo_loss(&tape, &p, &[], Mode::Eval, &mut rng).is_err());
        assert!(g.elbo_loss(&tape, &p, &[vec![4, 5, END]], Mode::Eval, &mut rng).is_err());
        assert!(g.elbo_loss(&tape, &p, &[vec![START, 4, 5]], Mode::Eval, &mut rng).is_err());
        assert!(g
            .elbo_loss(&tape, &p, &[vec![START, 4, END, PAD, PAD]], Mode::Eval, &mut rng)
            .is_ok());
    }

    #[test]
    fn sequence_logprob_changes_with_any_token() {
        let g = tiny();
        let base = vec![START, 4, 5, 6, END];
        let lp = |s: &[usize]| g.sequence_logprob(s, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let reference = lp(&base);
        for pos in 1..4 {
            let mut s = base.clone();
            s[pos] = if s[pos] == 4 { 3 } else { 4 };
            assert_ne!(lp(&s), reference, "position {pos}");
        }
    }
}
