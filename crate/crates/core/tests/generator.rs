mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{expected_negative_bound, exact_log_marginal, gauss_hermite, mean_var, random_framed, tiny_generator};
use vgan::data::{END, START};
use vgan::generator::{reparam_sample, FIRST_EMITTABLE, LOG_VAR_LIMIT};
use vgan::nn::Mode;
use vgan::tensor::{ParamSet, Tape, Tensor};
use vgan::{Generator, GeneratorConfig};

fn affine(ps: &ParamSet<f64>, name: &str, x: &[f64]) -> Vec<f64> {
    let w = ps.value(ps.find(&format!("{name}.weight")).unwrap());
    let b = ps.value(ps.find(&format!("{name}.bias")).unwrap());
    w.data()
        .chunks(x.len())
        .zip(b.data())
        .map(|(row, bias)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bias)
        .collect()
}

fn edit(ps: &mut ParamSet<f64>, name: &str, f: impl Fn(usize, f64) -> f64) {
    let id = ps.find(name).unwrap();
    for (i, x) in ps.get_mut(id).value_mut().data_mut().iter_mut().enumerate() {
        *x = f(i, *x);
    }
}

fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn gaussian_heads_are_affine_maps_split_in_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = tiny_generator(7, 3, 1, 1.0);
    // one log-variance far outside the clamp
    edit(&mut g.params, "prior.bias", |i, x| if i == 4 { 25.0 } else { x });
    let (h, v) = (random_vec(3, &mut rng), random_vec(2, &mut rng));

    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let k = |x: &[f64]| tape.constant(Tensor::vector(x.to_vec())).unwrap();
    let prior = g.prior_params(&p, k(&h)).unwrap();
    let post = g.posterior_params(&p, k(&v), k(&h)).unwrap();

    let want = affine(&g.params, "prior", &h);
    close(prior.mu.value().data(), &want[..3], 1e-13);
    let clamped: Vec<f64> = want[3..].iter().map(|x| x.clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT)).collect();
    close(prior.log_var.value().data(), &clamped, 1e-13);
    assert_eq!(prior.log_var.value().data()[1], LOG_VAR_LIMIT);

    let joined: Vec<f64> = v.iter().chain(&h).copied().collect();
    let want = affine(&g.params, "posterior", &joined);
    close(post.mu.value().data(), &want[..3], 1e-13);
    close(post.log_var.value().data(), &want[3..], 1e-13);
}

#[test]
fn output_distribution_is_softmax_over_emittable_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = tiny_generator(9, 2, 2, 1.5);
    let (h, z) = (random_vec(3, &mut rng), random_vec(2, &mut rng));
    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let k = |x: &[f64]| tape.constant(Tensor::vector(x.to_vec())).unwrap();
    let got = g.step_output_dist(&p, k(&h), k(&z)).unwrap().value();

    let joined: Vec<f64> = h.iter().chain(&z).copied().collect();
    let logits = affine(&g.params, "out", &joined);
    let emittable = &logits[FIRST_EMITTABLE..];
    let norm: f64 = emittable.iter().map(|x| x.exp()).sum();
    let want: Vec<f64> = emittable.iter().map(|x| x.exp() / norm).collect();
    assert_eq!(got.len(), 9 - FIRST_EMITTABLE);
    close(got.data(), &want, 1e-14);
    assert!((got.sum() - 1.0).abs() < 1e-14);
}

#[test]
fn untrained_reconstruction_is_near_uniform() {
    // two words: the emittable support is {E, UNK, w1, w2}
    let cfg = GeneratorConfig {
        vocab_size: 6,
        embed_dim: 8,
        hidden_dim: 16,
        latent_dim: 4,
        dropout: 0.0,
    };
    let g = Generator::<f64>::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch: Vec<Vec<usize>> = (0..200).map(|_| random_framed(6, 6, &mut rng)).collect();
    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let terms = g.elbo(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap();
    let per_token = terms.reconstruction.item().unwrap() * batch.len() as f64 / terms.tokens as f64;
    let uniform = (cfg.support_size() as f64).ln();
    assert!((per_token - uniform).abs() < 0.05, "{per_token} vs {uniform}");
}

#[test]
fn identical_prior_and_posterior_have_zero_kl() {
    let mut g = tiny_generator(7, 2, 5, 1.0);
    edit(&mut g.params, "prior.weight", |_, _| 0.0);
    edit(&mut g.params, "posterior.weight", |_, _| 0.0);
    let bias = g.params.value(g.params.find("prior.bias").unwrap()).clone();
    edit(&mut g.params, "posterior.bias", |i, _| bias.data()[i]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch: Vec<Vec<usize>> = (0..10).map(|_| random_framed(7, 5, &mut rng)).collect();
    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let terms = g.elbo(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap();
    assert!(terms.kl.item().unwrap().abs() <= 1e-12);
}

#[test]
fn kl_term_is_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..20 {
        let g = tiny_generator(7, 3, seed, 2.0);
        let batch = vec![random_framed(7, 6, &mut rng)];
        let tape = Tape::no_grad();
        let p = tape.bind(&g.params);
        let terms = g.elbo(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap();
        assert!(terms.kl.item().unwrap() >= 0.0);
    }
}

fn log_normal(x: &[f64], mu: &[f64], log_var: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(log_var)
        .map(|((x, m), lv)| -0.5 * ((2.0 * std::f64::consts::PI).ln() + lv + (x - m).powi(2) / lv.exp()))
        .sum()
}

/// `−log p(seq)` with each step's latent integrated by importance sampling
/// from the posterior.
fn importance_nll(g: &Generator<f64>, framed: &[usize], draws: usize, rng: &mut impl Rng) -> f64 {
    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let (mut h, mut c) = g.cell.zero_state(&tape).unwrap();
    let dz = g.config.latent_dim;
    let mut nll = 0.0;
    for t in 0..framed.len() - 2 {
        let prior = g.prior_params(&p, h).unwrap();
        let (v, h_t, c_t) = g.advance(&tape, &p, h, c, framed[t]).unwrap();
        let post = g.posterior_params(&p, v, h_t).unwrap();
        let target = framed[t + 1] - FIRST_EMITTABLE;
        let (pm, pv) = (prior.mu.value(), prior.log_var.value());
        let (qm, qv) = (post.mu.value(), post.log_var.value());
        let mut log_w = Vec::with_capacity(draws);
        for _ in 0..draws {
            let z: Vec<f64> = (0..dz)
                .map(|d| qm.data()[d] + (0.5 * qv.data()[d]).exp() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let zv = tape.constant(Tensor::vector(z.clone())).unwrap();
            let lp = g.step_log_probs(&p, h_t, zv).unwrap().value().data()[target];
            log_w.push(lp + log_normal(&z, pm.data(), pv.data()) - log_normal(&z, qm.data(), qv.data()));
        }
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = log_w.iter().map(|w| (w - top).exp()).sum::<f64>() / draws as f64;
        nll -= top + mean.ln();
        h = h_t;
        c = c_t;
    }
    nll
}

#[test]
fn negative_bound_is_at_least_the_negative_log_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = tiny_generator(6, 2, 9, 1.0);
    for _ in 0..5 {
        let seq = random_framed(6, 4, &mut rng);
        let draws: Vec<f64> = (0..4000)
            .map(|_| {
                let tape = Tape::no_grad();
                let p = tape.bind(&g.params);
                g.elbo_loss(&tape, &p, std::slice::from_ref(&seq), Mode::Eval, &mut rng).unwrap().item().unwrap()
            })
            .collect();
        let (bound, var) = mean_var(&draws);
        let se = (var / draws.len() as f64).sqrt();
        let nll = importance_nll(&g, &seq, 10_000, &mut rng);
        assert!(bound + 3.0 * se >= nll, "bound {bound} (se {se}) below nll {nll} for {seq:?}");
    }
}

#[test]
fn bound_mean_matches_quadrature_expectation() {
    let nodes = gauss_hermite(64);
    let g = tiny_generator(6, 1, 10, 1.2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let seq = random_framed(6, 4, &mut rng);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| {
                let tape = Tape::no_grad();
                let p = tape.bind(&g.params);
                g.elbo_loss(&tape, &p, std::slice::from_ref(&seq), Mode::Eval, &mut rng).unwrap().item().unwrap()
            })
            .collect();
        let (mean, var) = mean_var(&draws);
        let se = (var / draws.len() as f64).sqrt();
        let exact = expected_negative_bound(&g, &seq, &nodes);
        assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
        // and the expected bound dominates the exact likelihood
        assert!(exact >= -exact_log_marginal(&g, &seq, &nodes) - 1e-9);
    }
}

#[test]
fn first_token_frequencies_match_prior_averaged_softmax() {
    let g = tiny_generator(6, 2, 12, 1.5);
    let support = 6 - FIRST_EMITTABLE;

    // reference: the first-step output averaged over prior draws, with
    // its own Monte Carlo error
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tape = Tape::no_grad();
    let p = tape.bind(&g.params);
    let (h0, c0) = g.cell.zero_state(&tape).unwrap();
    let prior = g.prior_params(&p, h0).unwrap();
    let (_, h1, _) = g.advance(&tape, &p, h0, c0, START).unwrap();
    let ref_draws = 1000;
    let mut per_token: Vec<Vec<f64>> = (0..support).map(|_| Vec::with_capacity(ref_draws)).collect();
    for _ in 0..ref_draws {
        let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let z = reparam_sample(prior, tape.constant(Tensor::vector(eps)).unwrap()).unwrap();
        let dist = g.step_output_dist(&p, h1, z).unwrap().value();
        for (acc, &x) in per_token.iter_mut().zip(dist.data()) {
            acc.push(x);
        }
    }

    let n = 100_000;
    let mut counts = vec![0usize; support];
    for _ in 0..n {
        let s = g.sample_sequence(1, 1.0, &mut rng).unwrap();
        counts[s.tokens[0] - FIRST_EMITTABLE] += 1;
    }
    for (k, draws) in per_token.iter().enumerate() {
        let (want, var) = mean_var(draws);
        let freq = counts[k] as f64 / n as f64;
        let se = (want * (1.0 - want) / n as f64 + var / ref_draws as f64).sqrt();
        assert!((freq - want).abs() <= 3.0 * se, "token {k}: {freq} vs {want} (se {se})");
    }
}

/// A generator whose latents barely move and whose softmax is sharply peaked.
fn near_deterministic(seed: u64) -> Generator<f64> {
    let mut g = tiny_generator(7, 1, seed, 1.0);
    edit(&mut g.params, "prior.weight", |_, _| 0.0);
    edit(&mut g.params, "prior.bias", |i, _| if i == 1 { -LOG_VAR_LIMIT } else { 0.0 });
    edit(&mut g.params, "out.weight", |_, x| 80.0 * x);
    edit(&mut g.params, "out.bias", |_, x| 80.0 * x);
    g
}

#[test]
fn rollouts_of_a_deterministic_model_repeat_its_sample() {
    let budget = 6;
    for seed in [14, 15, 16] {
        let g = near_deterministic(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = g.sample_sequence(budget, 1.0, &mut rng).unwrap().tokens;
        for _ in 0..10 {
            assert_eq!(g.sample_sequence(budget, 1.0, &mut rng).unwrap().tokens, full);
        }
        for k in 0..full.len() {
            assert_eq!(g.rollout(&full[..k], budget, &mut rng).unwrap(), full, "prefix {k}");
        }
    }
}

#[test]
fn sequence_logprob_converges_to_quadrature() {
    let nodes = gauss_hermite(64);
    let g = tiny_generator(6, 1, 17, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..10 {
        let seq = random_framed(6, 5, &mut rng);
        let exact = exact_log_marginal(&g, &seq, &nodes);
        let est = g.sequence_logprob(&seq, 10_000, &mut rng).unwrap();
        assert!((est - exact).abs() <= 0.01 * exact.abs(), "{est} vs {exact}");
    }
}

#[test]
fn latent_free_models_need_one_draw() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let seq = vec![START, 4, 5, 4, END];

    // output layer ignores z entirely
    let mut g = tiny_generator(6, 2, 20, 1.0);
    let cols = 3 + 2;
    edit(&mut g.params, "out.weight", |i, x| if i % cols >= 3 { 0.0 } else { x });
    let one = g.sequence_logprob(&seq, 1, &mut rng).unwrap();
    let many = g.sequence_logprob(&seq, 500, &mut rng).unwrap();
    assert!((one - many).abs() <= 1e-12, "{one} vs {many}");

    // prior collapsed to a point (up to the log-variance clamp)
    let mut g = tiny_generator(6, 2, 21, 1.0);
    edit(&mut g.params, "prior.weight", |_, _| 0.0);
    edit(&mut g.params, "prior.bias", |i, _| if i >= 2 { -LOG_VAR_LIMIT } else { 0.3 });
    let one = g.sequence_logprob(&seq, 1, &mut rng).unwrap();
    let many = g.sequence_logprob(&seq, 2000, &mut rng).unwrap();
    assert!((one - many).abs() <= 1e-3 * many.abs(), "{one} vs {many}");
}

#[test]
fn samples_only_end_with_end() {
    let g = tiny_generator(8, 2, 22, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..500 {
        let s = g.sample_sequence(5, 1.0, &mut rng).unwrap();
        assert!(!s.tokens.is_empty() && s.tokens.len() <= 5);
        assert!(s.tokens.iter().all(|t| (FIRST_EMITTABLE..8).contains(t)));
        let ends = s.tokens.iter().filter(|&&t| t == END).count();
        assert_eq!(ends, usize::from(s.finished));
        assert!(!s.finished || *s.tokens.last().unwrap() == END);
        assert_eq!(s.noise.len(), s.tokens.len());
    }
}
