//! Convolutional real-vs-generated sequence classifier.

use rand::Rng;

use crate::data::PAD;
use crate::nn::{ConvFilterBank, EmbeddingTable, Linear};
use crate::tensor::{Bound, ParamSet, Real, Tape, TensorError, Var};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    /// Every input is padded or truncated to this length.
    pub seq_len: usize,
}

/// Sequences with labels `1.0` (real) or `0.0` (generated).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledBatch {
    pub sequences: Vec<Vec<usize>>,
    pub labels: Vec<f64>,
}

impl LabeledBatch {
    pub fn push(&mut self, seq: Vec<usize>, real: bool) {
        self.sequences.push(seq);
        self.labels.push(if real { 1.0 } else { 0.0 });
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Right-pads with PAD, or truncates, to exactly `len` tokens.
pub fn pad_to_length(seq: &[usize], len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = seq.iter().copied().take(len).collect();
    out.resize(len, PAD);
    out
}

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    pub params: ParamSet<T>,
    pub config: DiscConfig,
    pub embedding: EmbeddingTable,
    pub bank: ConvFilterBank,
    pub fc: Linear,
}

impl<T: Real> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscConfig, rng: &mut R) -> Result<Self> {
        if config.windows.is_empty() || config.filters_per_window == 0 {
            return Err(Error::Invalid("discriminator needs at least one filter".into()));
        }
        if let Some(&w) = config.windows.iter().find(|&&w| w > config.seq_len || w == 0) {
            return Err(Error::Invalid(format!(
                "window size {w} does not fit sequences of length {}",
                config.seq_len
            )));
        }
        let mut params = ParamSet::new();
        let embedding = EmbeddingTable::new(&mut params, "embedding", config.embed_dim, config.vocab_size, rng)?;
        let bank = ConvFilterBank::new(
            &mut params,
            "conv",
            &config.windows,
            config.filters_per_window,
            config.embed_dim,
            rng,
        )?;
        let fc = Linear::new(&mut params, "fc", bank.num_features(), 1, rng)?;
        Ok(Self {
            params,
            config,
            embedding,
            bank,
            fc,
        })
    }

    /// Pre-sigmoid score of a sequence of exactly `seq_len` tokens.
    pub fn logit<'t>(&self, tape: &'t Tape<T>, p: &Bound<'t, T>, seq: &[usize]) -> Result<Var<'t, T>, TensorError> {
        if seq.len() != self.config.seq_len {
            return Err(TensorError::Shape {
                op: "classify",
                lhs: vec![seq.len()],
                rhs: vec![self.config.seq_len],
            });
        }
        let sentence = self.embedding.embed_sequence(tape, p, seq)?;
        let features = self.bank.forward(p, sentence)?;
        self.fc.forward(p, features)?.sum()
    }

    /// Probability that `seq` is real data.
    pub fn probability<'t>(&self, tape: &'t Tape<T>, p: &Bound<'t, T>, seq: &[usize]) -> Result<Var<'t, T>, TensorError> {
        self.logit(tape, p, seq)?.sigmoid()
    }

    /// `D(seq)` for a sequence of exactly `seq_len` tokens.
    pub fn classify(&self, seq: &[usize]) -> Result<f64> {
        let tape = Tape::no_grad();
        let p = tape.bind(&self.params);
        Ok(self.probability(&tape, &p, seq)?.item()?.as_f64())
    }

    /// Pads or truncates first, then classifies.
    pub fn classify_padded(&self, seq: &[usize]) -> Result<f64> {
        self.classify(&pad_to_length(seq, self.config.seq_len))
    }

    /// Binary cross-entropy with clamped probabilities, averaged over the batch.
    /// Sequences are padded to `seq_len` here.
    pub fn disc_loss<'t>(&self, tape: &'t Tape<T>, p: &Bound<'t, T>, batch: &LabeledBatch) -> Result<Var<'t, T>> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty discriminator batch".into()));
        }
        if batch.labels.len() != batch.sequences.len() {
            return Err(Error::Invalid("labels and sequences differ in length".into()));
        }
        let lo = T::lit(PROB_CLAMP);
        let hi = T::one() - lo;
        let mut total = tape.scalar(T::zero())?;
        for (seq, &y) in batch.sequences.iter().zip(&batch.labels) {
            let prob = self
                .probability(tape, p, &pad_to_length(seq, self.config.seq_len))?
                .clamp(lo, hi)?;
            if y > 0.0 {
                total = total.add(prob.log()?.scale(T::lit(y))?)?;
            }
            if y < 1.0 {
                let miss = prob.neg()?.add_scalar(T::one())?.log()?;
                total = total.add(miss.scale(T::lit(1.0 - y))?)?;
            }
        }
        Ok(total.scale(T::lit(-1.0 / batch.len() as f64))?)
    }

    /// Share of the batch classified on the right side of 0.5.
    pub fn accuracy(&self, batch: &LabeledBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty discriminator batch".into()));
        }
        let mut correct = 0;
        for (seq, &y) in batch.sequences.iter().zip(&batch.labels) {
            let d = self.classify_padded(seq)?;
            if (d > 0.5) == (y > 0.5) {
                correct += 1;
            }
        }
        Ok(correct as f64 / batch.len() as f64)
    }
}
