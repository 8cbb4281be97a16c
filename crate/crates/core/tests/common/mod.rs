//! Independent oracles shared by the integration tests: Gauss–Hermite
//! quadrature over a 1-D latent, exhaustive enumeration of short sequences,
//! and central finite differences over a whole parameter set.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vgan::data::{END, PAD, START};
use vgan::generator::{reparam_sample, unframe, FIRST_EMITTABLE};
use vgan::tensor::{ParamSet, Tape, Tensor};
use vgan::{DiscConfig, Discriminator, Generator, GeneratorConfig};

/// Nodes and weights with `Σ w f(x) ≈ E[f(Z)]`, `Z ~ N(0, 1)`.
///
/// Newton iteration on orthonormal Hermite polynomials with the classic
/// asymptotic starting guesses, then rescaled from the `e^{-x²}` weight.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z: f64 = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let root_pi = std::f64::consts::PI.sqrt();
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (xi * std::f64::consts::SQRT_2, wi / root_pi))
        .collect()
}

/// Redraws every parameter uniformly in `[-scale, scale]`, keeping the
/// embedding PAD column at zero.
pub fn randomize(params: &mut ParamSet<f64>, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params.iter_mut() {
        let is_embedding = p.name.ends_with("embedding.weight");
        let cols = p.value().shape().last().copied().unwrap_or(1);
        for (i, x) in p.value_mut().data_mut().iter_mut().enumerate() {
            *x = if is_embedding && i % cols == PAD {
                0.0
            } else {
                rng.random_range(-scale..=scale)
            };
        }
    }
}

pub fn tiny_generator(vocab_size: usize, latent_dim: usize, seed: u64, scale: f64) -> Generator<f64> {
    let cfg = GeneratorConfig {
        vocab_size,
        embed_dim: 2,
        hidden_dim: 3,
        latent_dim,
        dropout: 0.0,
    };
    let mut g = Generator::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    randomize(&mut g.params, scale, seed ^ 0xabcd);
    g
}

pub fn tiny_discriminator(vocab_size: usize, seq_len: usize, seed: u64, scale: f64) -> Discriminator<f64> {
    let cfg = DiscConfig {
        vocab_size,
        embed_dim: 3,
        windows: (1..=seq_len.min(2)).collect(),
        filters_per_window: 4,
        seq_len,
    };
    let mut d = Discriminator::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    randomize(&mut d.params, scale, seed ^ 0x1234);
    d
}

/// Per-step probabilities of `tokens` (sampled after S) with each step's
/// prior latent integrated out by quadrature. Requires a 1-D latent.
pub fn marginal_step_probs(g: &Generator<f64>, tokens: &[usize], nodes: &[(f64, f64)]) -> Vec<f64> {
    assert_eq!(g.config.latent_dim, 1, "quadrature oracle needs a 1-D latent");
    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let (mut h, mut c) = g.cell.zero_state(&tape).unwrap();
    let mut input = START;
    let mut out = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        let prior = g.prior_params(&p, h).unwrap();
        let (_, h_t, c_t) = g.advance(&tape, &p, h, c, input).unwrap();
        let mut prob = 0.0;
        for &(x, w) in nodes {
            let eps = tape.constant(Tensor::vector(vec![x])).unwrap();
            let z = reparam_sample(prior, eps).unwrap();
            let dist = g.step_output_dist(&p, h_t, z).unwrap().value();
            prob += w * dist.data()[tok - FIRST_EMITTABLE];
        }
        out.push(prob);
        h = h_t;
        c = c_t;
        input = tok;
    }
    out
}

/// Exact `log p(seq)` of a framed sequence, latents integrated by quadrature.
pub fn exact_log_marginal(g: &Generator<f64>, framed: &[usize], nodes: &[(f64, f64)]) -> f64 {
    let body = unframe(framed).unwrap();
    marginal_step_probs(g, &body[1..], nodes).iter().map(|p| p.ln()).sum()
}

/// Expected negative bound `E_ε[L]` of a framed sequence with a 1-D latent.
///
/// The bound is a sum of per-step terms that each depend on their own `ε_t`
/// only, so putting the same quadrature node at every step and summing the
/// weighted totals gives every step its exact expectation.
pub fn expected_negative_bound(g: &Generator<f64>, framed: &[usize], nodes: &[(f64, f64)]) -> f64 {
    let steps = unframe(framed).unwrap().len() - 1;
    let mut total = 0.0;
    for &(x, w) in nodes {
        let tape = Tape::no_grad();
        let p = tape.bind(&g.params);
        let eps = vec![Tensor::vector(vec![x]); steps];
        let terms = g.elbo_with_noise(&tape, &p, framed, &eps).unwrap();
        total += w * terms.loss.item().unwrap();
    }
    total
}

/// Every finished token sequence of at most `budget` tokens: sequences that
/// end in E, plus E-free sequences of exactly `budget` tokens.
pub fn enumerate_sequences(vocab_size: usize, budget: usize) -> Vec<Vec<usize>> {
    let mut done = Vec::new();
    let mut open = vec![Vec::new()];
    while let Some(prefix) = open.pop() {
        for tok in FIRST_EMITTABLE..vocab_size {
            let mut next: Vec<usize> = prefix.clone();
            next.push(tok);
            if tok == END || next.len() == budget {
                done.push(next);
            } else {
                open.push(next);
            }
        }
    }
    done.sort();
    done
}

/// `J = Σ_Y P(Y) D(pad(Y))` over all finished sequences within `budget`.
pub fn exact_objective(g: &Generator<f64>, d: &Discriminator<f64>, budget: usize, nodes: &[(f64, f64)]) -> f64 {
    enumerate_sequences(g.config.vocab_size, budget)
        .iter()
        .map(|y| {
            let prob: f64 = marginal_step_probs(g, y, nodes).iter().product();
            prob * d.classify_padded(y).unwrap()
        })
        .sum()
}

/// Central finite-difference gradient of `f` over all of `params`, flattened
/// in parameter order.
pub fn fd_gradient(params: &ParamSet<f64>, step: f64, f: impl Fn(&ParamSet<f64>) -> f64) -> Vec<f64> {
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.num_scalars());
    let n_params = params.iter().count();
    for k in 0..n_params {
        let len = params.iter().nth(k).unwrap().value().len();
        for i in 0..len {
            let orig = params.iter().nth(k).unwrap().value().data()[i];
            probe.iter_mut().nth(k).unwrap().value_mut().data_mut()[i] = orig + step;
            let plus = f(&probe);
            probe.iter_mut().nth(k).unwrap().value_mut().data_mut()[i] = orig - step;
            let minus = f(&probe);
            probe.iter_mut().nth(k).unwrap().value_mut().data_mut()[i] = orig;
            out.push((plus - minus) / (2.0 * step));
        }
    }
    out
}

/// Stored gradients flattened in parameter order.
pub fn flat_grads(params: &ParamSet<f64>) -> Vec<f64> {
    params.iter().flat_map(|p| p.grad.data().to_vec()).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Running mean and variance (Welford) of vectors.
pub struct VecStats {
    pub n: usize,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VecStats {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Standard errors of the means.
    pub fn std_errors(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2.iter().map(|s| (s / (n - 1.0) / n).sqrt()).collect()
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Framed random sequence of 1..=max_words emittable non-E tokens.
pub fn random_framed(vocab_size: usize, max_words: usize, rng: &mut impl Rng) -> Vec<usize> {
    let len = rng.random_range(1..=max_words);
    let mut s = vec![START];
    s.extend((0..len).map(|_| rng.random_range(END + 1..vocab_size)));
    s.push(END);
    s
}
