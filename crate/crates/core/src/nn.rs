//! Layers shared by the generator and the discriminator.

use rand::Rng;

use crate::tensor::{Bound, ParamId, ParamSet, Real, Tape, Tensor, TensorError, Var};
use crate::data::PAD;

/// Scale of the uniform weight initialization.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn uniform_tensor<T: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-scale..=scale))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

/// Affine map `W x + b` with `W: [output, input]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let weight = params.register(format!("{name}.weight"), uniform_tensor(rng, &[output, input], INIT_SCALE))?;
        let bias = params.register(format!("{name}.bias"), Tensor::zeros(&[output]))?;
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        p[self.weight].matvec(x)?.add(p[self.bias])
    }
}

/// Token embedding matrix `[q, |V|]`; column `k` is the vector of token `k`.
///
/// The PAD column is zero and is never read through the tape, so it receives
/// no gradient and stays zero under any optimizer that maps zero gradients to
/// zero updates.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub weight: ParamId,
    pub dim: usize,
    pub vocab_size: usize,
}

impl EmbeddingTable {
    pub fn new<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        dim: usize,
        vocab_size: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let mut w: Tensor<T> = uniform_tensor(rng, &[dim, vocab_size], INIT_SCALE);
        for i in 0..dim {
            w.data_mut()[i * vocab_size + PAD] = T::zero();
        }
        let weight = params.register(format!("{name}.weight"), w)?;
        Ok(Self {
            weight,
            dim,
            vocab_size,
        })
    }

    pub fn embed<'t, T: Real>(&self, tape: &'t Tape<T>, p: &Bound<'t, T>, token: usize) -> Result<Var<'t, T>, TensorError> {
        if token >= self.vocab_size {
            return Err(TensorError::Index {
                index: token,
                len: self.vocab_size,
            });
        }
        if token == PAD {
            return tape.constant(Tensor::zeros(&[self.dim]));
        }
        p[self.weight].column(token)
    }

    /// Embeds a token sequence as a `[len, q]` matrix.
    pub fn embed_sequence<'t, T: Real>(
        &self,
        tape: &'t Tape<T>,
        p: &Bound<'t, T>,
        tokens: &[usize],
    ) -> Result<Var<'t, T>, TensorError> {
        let rows = tokens
            .iter()
            .map(|&t| self.embed(tape, p, t))
            .collect::<Result<Vec<_>, _>>()?;
        Var::stack_rows(&rows)
    }
}

/// Peephole LSTM cell.
///
/// ```text
/// i = σ(W_ix v + W_ih h' + W_ic ⊙ c' + b_i)
/// f = σ(W_fx v + W_fh h' + W_fc ⊙ c' + b_f)
/// c = f ⊙ c' + i ⊙ tanh(W_cx v + W_ch h' + b_c)
/// o = σ(W_ox v + W_oh h' + W_oc ⊙ c' + b_o)
/// h = o ⊙ tanh(c)
/// ```
///
/// The output gate peeks at the previous cell state, as the input and
/// forget gates do.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub output_gate: Gate,
    pub w_cx: ParamId,
    pub w_ch: ParamId,
    pub b_c: ParamId,
}

/// Weights of one sigmoid gate.
#[derive(Clone, Debug)]
pub struct Gate {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub w_c: ParamId,
    pub bias: ParamId,
}

impl Gate {
    fn new<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        input: usize,
        hidden: usize,
        bias: f64,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            w_x: params.register(format!("{name}.w_x"), uniform_tensor(rng, &[hidden, input], INIT_SCALE))?,
            w_h: params.register(format!("{name}.w_h"), uniform_tensor(rng, &[hidden, hidden], INIT_SCALE))?,
            w_c: params.register(format!("{name}.w_c"), uniform_tensor(rng, &[hidden], INIT_SCALE))?,
            bias: params.register(format!("{name}.bias"), Tensor::full(&[hidden], T::lit(bias)))?,
        })
    }

    fn activate<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        v: Var<'t, T>,
        h_prev: Var<'t, T>,
        c_prev: Var<'t, T>,
    ) -> Result<Var<'t, T>, TensorError> {
        p[self.w_x]
            .matvec(v)?
            .add(p[self.w_h].matvec(h_prev)?)?
            .add(p[self.w_c].mul(c_prev)?)?
            .add(p[self.bias])?
            .sigmoid()
    }
}

impl LstmCell {
    pub fn new<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let input_gate = Gate::new(params, &format!("{name}.input_gate"), input, hidden, 0.0, rng)?;
        let forget_gate = Gate::new(params, &format!("{name}.forget_gate"), input, hidden, 1.0, rng)?;
        let output_gate = Gate::new(params, &format!("{name}.output_gate"), input, hidden, 0.0, rng)?;
        let w_cx = params.register(format!("{name}.cell.w_x"), uniform_tensor(rng, &[hidden, input], INIT_SCALE))?;
        let w_ch = params.register(format!("{name}.cell.w_h"), uniform_tensor(rng, &[hidden, hidden], INIT_SCALE))?;
        let b_c = params.register(format!("{name}.cell.bias"), Tensor::zeros(&[hidden]))?;
        Ok(Self {
            input,
            hidden,
            input_gate,
            forget_gate,
            output_gate,
            w_cx,
            w_ch,
            b_c,
        })
    }

    pub fn zero_state<'t, T: Real>(&self, tape: &'t Tape<T>) -> Result<(Var<'t, T>, Var<'t, T>), TensorError> {
        Ok((
            tape.constant(Tensor::zeros(&[self.hidden]))?,
            tape.constant(Tensor::zeros(&[self.hidden]))?,
        ))
    }

    /// One recurrence step; returns `(h, c)`.
    pub fn step<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        v: Var<'t, T>,
        h_prev: Var<'t, T>,
        c_prev: Var<'t, T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>), TensorError> {
        let i = self.input_gate.activate(p, v, h_prev, c_prev)?;
        let f = self.forget_gate.activate(p, v, h_prev, c_prev)?;
        let o = self.output_gate.activate(p, v, h_prev, c_prev)?;
        let candidate = p[self.w_cx]
            .matvec(v)?
            .add(p[self.w_ch].matvec(h_prev)?)?
            .add(p[self.b_c])?
            .tanh()?;
        let c = f.mul(c_prev)?.add(i.mul(candidate)?)?;
        let h = o.mul(c.tanh()?)?;
        Ok((h, c))
    }
}

/// One group of equally sized convolution windows.
#[derive(Clone, Debug)]
pub struct ConvWindow {
    pub window: usize,
    /// `[count, window * k]`
    pub filters: ParamId,
    pub bias: ParamId,
}

/// Filters of several window sizes, each followed by tanh and max-over-time
/// pooling. The pooled features of all groups are concatenated.
#[derive(Clone, Debug)]
pub struct ConvFilterBank {
    pub groups: Vec<ConvWindow>,
    pub per_window: usize,
    pub embed_dim: usize,
}

impl ConvFilterBank {
    pub fn new<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        windows: &[usize],
        per_window: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let mut groups = Vec::with_capacity(windows.len());
        for &window in windows {
            if window == 0 {
                return Err(TensorError::Contract("window size must be positive".into()));
            }
            groups.push(ConvWindow {
                window,
                filters: params.register(
                    format!("{name}.w{window}.filters"),
                    uniform_tensor(rng, &[per_window, window * embed_dim], INIT_SCALE),
                )?,
                bias: params.register(format!("{name}.w{window}.bias"), Tensor::zeros(&[per_window]))?,
            });
        }
        Ok(Self {
            groups,
            per_window,
            embed_dim,
        })
    }

    pub fn max_window(&self) -> usize {
        self.groups.iter().map(|g| g.window).max().unwrap_or(0)
    }

    pub fn num_features(&self) -> usize {
        self.groups.len() * self.per_window
    }

    /// `sentence` is `[n, k]`; returns the pooled feature vector.
    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, sentence: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let pooled = self
            .groups
            .iter()
            .map(|g| {
                sentence
                    .conv1d(p[g.filters], p[g.bias], g.window)?
                    .tanh()?
                    .max_over_time()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Var::concat(&pooled)
    }
}

/// Bernoulli keep-mask for inverted dropout (1 = keep).
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize, rate: f64) -> Tensor<T> {
    Tensor::vector(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { T::one() })
            .collect(),
    )
}

/// Inverted dropout with an externally drawn keep-mask.
pub fn dropout<'t, T: Real>(
    x: Var<'t, T>,
    rate: f64,
    mode: Mode,
    keep: &Tensor<T>,
) -> Result<Var<'t, T>, TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::Contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let scale = T::lit(1.0 / (1.0 - rate));
    let mask = x.tape().constant(keep.map(|k| k * scale))?;
    x.mul(mask)
}
