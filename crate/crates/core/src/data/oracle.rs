//! Frozen latent-free LSTM language model used as a known data distribution.
//!
//! Because the oracle has no latent variables, the exact probability of any
//! token sequence under it is a product of per-step softmax entries. That
//! makes the negative log-likelihood of generated samples an exact measure of
//! how close a generator has come to the data distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Checkpoint, Corpus, END, START};
use crate::generator::{emit_index, sample_index, FIRST_EMITTABLE};
use crate::nn::{EmbeddingTable, Linear, LstmCell};
use crate::tensor::{ParamSet, Tape};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian weight initialization.
    pub init_std: f64,
    /// Extra logit added to E; controls the typical sentence length.
    pub end_bias: f64,
}

impl OracleConfig {
    pub fn render(&self) -> String {
        format!(
            "oracle_vocab_size = {}\noracle_embed_dim = {}\noracle_hidden_dim = {}\noracle_seed = {}\noracle_init_std = {}\noracle_end_bias = {}\n",
            self.vocab_size, self.embed_dim, self.hidden_dim, self.seed, self.init_std, self.end_bias
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self {
            vocab_size: 0,
            embed_dim: 0,
            hidden_dim: 0,
            seed: 0,
            init_std: 1.0,
            end_bias: 0.0,
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("bad oracle config line `{line}`")))?;
            let v = v.trim();
            match k.trim() {
                "oracle_vocab_size" => cfg.vocab_size = parse_value(k, v)?,
                "oracle_embed_dim" => cfg.embed_dim = parse_value(k, v)?,
                "oracle_hidden_dim" => cfg.hidden_dim = parse_value(k, v)?,
                "oracle_seed" => cfg.seed = parse_value(k, v)?,
                "oracle_init_std" => cfg.init_std = parse_value(k, v)?,
                "oracle_end_bias" => cfg.end_bias = parse_value(k, v)?,
                other => return Err(Error::Invalid(format!("unknown oracle key `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("bad value `{value}` for `{}`", key.trim())))
}

/// Fully determined by its [`OracleConfig`]; never trained.
#[derive(Clone, Debug)]
pub struct OracleModel {
    params: ParamSet<f64>,
    config: OracleConfig,
    embedding: EmbeddingTable,
    cell: LstmCell,
    out: Linear,
}

impl OracleModel {
    pub fn new(config: OracleConfig) -> Result<Self> {
        if config.vocab_size <= FIRST_EMITTABLE + 1 {
            return Err(Error::Invalid(format!("oracle vocab size {} too small", config.vocab_size)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let embedding = EmbeddingTable::new(&mut params, "embedding", config.embed_dim, config.vocab_size, &mut rng)?;
        let cell = LstmCell::new(&mut params, "lstm", config.embed_dim, config.hidden_dim, &mut rng)?;
        let out = Linear::new(&mut params, "out", config.hidden_dim, config.vocab_size, &mut rng)?;

        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Invalid(e.to_string()))?;
        let pad_column = |name: &str, i: usize| name == "embedding.weight" && i % config.vocab_size == crate::data::PAD;
        for p in params.iter_mut() {
            let name = p.name.clone();
            let is_bias = name.ends_with("bias");
            for (i, x) in p.value_mut().data_mut().iter_mut().enumerate() {
                if is_bias || pad_column(&name, i) {
                    continue;
                }
                // f32-representable so checkpoints reproduce the oracle exactly
                *x = normal.sample(&mut rng) as f32 as f64;
            }
        }
        params.get_mut(out.bias).value_mut().data_mut()[END] = config.end_bias as f32 as f64;
        Ok(Self {
            params,
            config,
            embedding,
            cell,
            out,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<f64> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f64> {
        &mut self.params
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.render());
        ck.push_params("oracle.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut oracle = Self::new(OracleConfig::parse(&ck.config)?)?;
        ck.load_params("oracle.", &mut oracle.params)?;
        Ok(oracle)
    }

    /// Log-probability vectors over emittable tokens along `tokens`, plus one
    /// extra distribution after the last token.
    fn walk(&self, tokens: &[usize], mut visit: impl FnMut(&[f64]) -> Option<usize>) -> Result<Vec<usize>> {
        let tape = Tape::no_grad();
        let p = tape.bind(&self.params);
        let (mut h, mut c) = self.cell.zero_state(&tape)?;
        let mut input = START;
        let mut emitted = Vec::new();
        let mut pos = 0;
        loop {
            let v = self.embedding.embed(&tape, &p, input)?;
            let (h2, c2) = self.cell.step(&p, v, h, c)?;
            let logits = self.out.forward(&p, h2)?;
            let lp = logits
                .slice(FIRST_EMITTABLE, self.config.vocab_size - FIRST_EMITTABLE)?
                .log_softmax()?
                .value();
            let next = match tokens.get(pos) {
                Some(&t) => {
                    visit(lp.data());
                    Some(t)
                }
                None => visit(lp.data()),
            };
            let Some(tok) = next else { break };
            emitted.push(tok);
            pos += 1;
            h = h2;
            c = c2;
            input = tok;
            if tok == END {
                break;
            }
        }
        Ok(emitted)
    }

    /// Samples up to `max_tokens` tokens after S, stopping at E.
    pub fn sample<R: Rng + ?Sized>(&self, max_tokens: usize, rng: &mut R) -> Result<Vec<usize>> {
        let mut count = 0;
        self.walk(&[], |lp| {
            if count >= max_tokens {
                return None;
            }
            count += 1;
            Some(sample_index(lp, rng) + FIRST_EMITTABLE)
        })
    }

    /// Exact `Σ_t log p(y_t | y_<t)` of a token sequence sampled after S.
    pub fn log_prob(&self, tokens: &[usize]) -> Result<f64> {
        let idx = tokens
            .iter()
            .map(|&t| emit_index(t, self.config.vocab_size))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(pos) = tokens.iter().position(|&t| t == END) {
            if pos + 1 != tokens.len() {
                return Err(Error::Invalid("E must be the final token".into()));
            }
        }
        let mut total = 0.0;
        let mut step = 0;
        self.walk(tokens, |lp| {
            if step < idx.len() {
                total += lp[idx[step]];
            }
            step += 1;
            None
        })?;
        Ok(total)
    }

    /// `n` non-empty sentences of at most `max_len` words. Samples that end
    /// immediately are redrawn, since a corpus file cannot hold empty lines.
    pub fn generate(&self, n: usize, max_len: usize, seed: u64) -> Result<Corpus> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sentences = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while sentences.len() < n {
            attempts += 1;
            if attempts > 100 * n + 100 {
                return Err(Error::Invalid("oracle almost never emits a non-empty sentence".into()));
            }
            let mut toks = self.sample(max_len + 1, &mut rng)?;
            if toks.last() == Some(&END) {
                toks.pop();
            }
            if !toks.is_empty() {
                sentences.push(toks);
            }
        }
        Ok(Corpus::from_ids(sentences, max_len))
    }

    /// `−mean Σ_t log p_oracle(y_t | y_<t)` over token sequences.
    pub fn nll(&self, samples: &[Vec<usize>]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Invalid("no samples for oracle NLL".into()));
        }
        let mut total = 0.0;
        for s in samples {
            total -= self.log_prob(s)?;
        }
        Ok(total / samples.len() as f64)
    }

    /// Oracle NLL divided by the total token count.
    pub fn nll_per_token(&self, samples: &[Vec<usize>]) -> Result<f64> {
        let tokens: usize = samples.iter().map(Vec::len).sum();
        if tokens == 0 {
            return Err(Error::Invalid("no tokens for oracle NLL".into()));
        }
        Ok(self.nll(samples)? * samples.len() as f64 / tokens as f64)
    }
}
