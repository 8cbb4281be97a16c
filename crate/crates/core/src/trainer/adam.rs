//! Bias-corrected Adam.

use crate::data::Checkpoint;
use crate::tensor::{ParamSet, Real, Tensor, TensorError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>, lr: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value().shape())).collect();
        Self {
            lr,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One descent step along the gradients stored in `params`.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<(), TensorError> {
        if self.m.len() != params.len() {
            return Err(TensorError::Contract(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let c1 = T::lit(1.0 - BETA1.powi(self.t as i32));
        let c2 = T::lit(1.0 - BETA2.powi(self.t as i32));
        let lr = T::lit(self.lr);
        let eps = T::lit(EPSILON);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.shape() != p.grad.shape() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    lhs: m.shape().to_vec(),
                    rhs: p.grad.shape().to_vec(),
                });
            }
            let grad = p.grad.data().to_vec();
            let value = p.value_mut().data_mut();
            for (i, &g) in grad.iter().enumerate() {
                let mi = b1 * m.data()[i] + (T::one() - b1) * g;
                let vi = b2 * v.data()[i] + (T::one() - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / c1;
                let v_hat = vi / c2;
                value[i] = value[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Stores moments as `{prefix}m.{name}` / `{prefix}v.{name}` and the step count as `{prefix}t`.
    pub fn push_to(&self, ck: &mut Checkpoint, prefix: &str, params: &ParamSet<T>) {
        for ((p, m), v) in params.iter().zip(&self.m).zip(&self.v) {
            ck.push(format!("{prefix}m.{}", p.name), m.cast());
            ck.push(format!("{prefix}v.{}", p.name), v.cast());
        }
        // 24-bit halves are exact in f32
        let hi = (self.t >> 24) as f32;
        let lo = (self.t & 0xFF_FFFF) as f32;
        ck.push(format!("{prefix}t"), Tensor::vector(vec![hi, lo]));
        ck.push(format!("{prefix}lr"), Tensor::vector(split_bits(self.lr.to_bits())));
    }

    pub fn load_from(ck: &Checkpoint, prefix: &str, params: &ParamSet<T>) -> Option<Self> {
        let lr = f64::from_bits(join_bits(ck.get(&format!("{prefix}lr"))?.data())?);
        let mut state = Self::new(params, lr);
        for ((p, m), v) in params.iter().zip(&mut state.m).zip(&mut state.v) {
            let mt = ck.get(&format!("{prefix}m.{}", p.name))?;
            let vt = ck.get(&format!("{prefix}v.{}", p.name))?;
            if mt.shape() != m.shape() || vt.shape() != v.shape() {
                return None;
            }
            *m = mt.cast();
            *v = vt.cast();
        }
        let t = ck.get(&format!("{prefix}t"))?.data();
        if t.len() != 2 {
            return None;
        }
        state.t = ((t[0] as u64) << 24) | t[1] as u64;
        Some(state)
    }
}

// 22-bit chunks are exact in f32, so an f64 survives as three of them
fn split_bits(x: u64) -> Vec<f32> {
    (0..3).rev().map(|i| ((x >> (22 * i)) & 0x3F_FFFF) as f32).collect()
}

fn join_bits(chunks: &[f32]) -> Option<u64> {
    if chunks.len() != 3 {
        return None;
    }
    Some(chunks.iter().fold(0u64, |acc, &c| (acc << 22) | c as u64))
}

/// Clips the stored gradients to `max_norm`, then takes an Adam step.
/// Returns the pre-clip gradient norm.
pub fn clip_and_step<T: Real>(
    params: &mut ParamSet<T>,
    adam: &mut AdamState<T>,
    max_norm: f64,
) -> Result<f64, TensorError> {
    let norm = params.clip_grad_norm(T::lit(max_norm)).as_f64();
    adam.step(params)?;
    Ok(norm)
}
