use std::cell::RefCell;
use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use super::{ParamId, ParamSet, Real, Tensor, TensorError};

/// Recorded operation with the ids of its inputs.
#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatVec(usize, usize),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Clamp(usize, T, T),
    Sum(usize),
    Concat(Vec<usize>),
    Slice(usize, usize),
    Column(usize, usize),
    StackRows(Vec<usize>),
    Conv1d {
        input: usize,
        filters: usize,
        bias: usize,
        window: usize,
    },
    MaxOverTime(usize, Vec<usize>),
    LogSoftmax(usize),
    Softmax(usize),
    Pick(usize, usize),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    param: Option<(u64, usize)>,
}

/// Reverse-mode gradient record for a single training step.
///
/// Every operation evaluates eagerly and, when recording, appends a node
/// holding its output and a local backward rule. Node ids are assigned in
/// evaluation order, so the node list is already topologically sorted.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
}

/// Handle to a value on a [`Tape`].
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

/// Parameters of one [`ParamSet`] bound as leaves on a tape.
pub struct Bound<'t, T> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T> Index<ParamId> for Bound<'t, T> {
    type Output = Var<'t, T>;

    fn index(&self, id: ParamId) -> &Self::Output {
        &self.vars[id.0]
    }
}

/// Gradients of a scalar with respect to every bound parameter.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    leaves: Vec<(u64, usize, Tensor<T>)>,
}

impl<T: Real> Gradients<T> {
    /// Adds the gradients that belong to `params` into its `grad` fields.
    pub fn accumulate_into(&self, params: &mut ParamSet<T>) -> Result<(), TensorError> {
        let set = params.set_id();
        for (sid, idx, g) in &self.leaves {
            if *sid == set {
                params.get_mut(ParamId(*idx)).grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    /// Gradient for one parameter, if it was reached by the backward pass.
    pub fn get(&self, params: &ParamSet<T>, id: ParamId) -> Option<&Tensor<T>> {
        let set = params.set_id();
        self.leaves
            .iter()
            .find(|(sid, idx, _)| *sid == set && *idx == id.0)
            .map(|(_, _, g)| g)
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: true,
        }
    }

    /// A tape that evaluates values but records no backward rules.
    pub fn no_grad() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn bind(&self, params: &ParamSet<T>) -> Bound<'_, T> {
        let set = params.set_id();
        let mut nodes = self.nodes.borrow_mut();
        let vars = params
            .arcs()
            .enumerate()
            .map(|(i, value)| {
                nodes.push(Node {
                    value: Arc::clone(value),
                    op: Op::Leaf,
                    param: Some((set, i)),
                });
                Var {
                    tape: self,
                    id: nodes.len() - 1,
                }
            })
            .collect();
        Bound { vars }
    }

    pub fn constant(&self, value: Tensor<T>) -> Result<Var<'_, T>, TensorError> {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn scalar(&self, value: T) -> Result<Var<'_, T>, TensorError> {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, var: Var<'_, T>) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[var.id].value)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var<'_, T>, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let op = if self.recording { op } else { Op::Leaf };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            param: None,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn val(&self, id: usize) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>, TensorError> {
        if !self.recording {
            return Err(TensorError::Contract("backward on a non-recording tape".into()));
        }
        let nodes = self.nodes.borrow();
        let seed = &nodes[loss.id].value;
        if !seed.is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                seed.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::full(seed.shape(), T::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            for (input, dg) in local_backward(&nodes, node, &g)? {
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&dg)?,
                    slot @ None => *slot = Some(dg),
                }
            }
        }

        let leaves = nodes[..=loss.id]
            .iter()
            .enumerate()
            .filter_map(|(id, node)| {
                let (set, idx) = node.param?;
                grads[id].take().map(|g| (set, idx, g))
            })
            .collect();
        Ok(Gradients { leaves })
    }
}

fn local_backward<T: Real>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &Tensor<T>,
) -> Result<Vec<(usize, Tensor<T>)>, TensorError> {
    let val = |id: usize| -> &Tensor<T> { &nodes[id].value };
    let y = &node.value;
    let out = match &node.op {
        Op::Leaf => Vec::new(),
        Op::MatVec(w, x) => {
            let (wv, xv) = (val(*w), val(*x));
            let (m, k) = wv.dims2("matvec")?;
            let mut dw = vec![T::zero(); m * k];
            let mut dx = vec![T::zero(); k];
            for i in 0..m {
                let gi = g.data()[i];
                let row = &wv.data()[i * k..(i + 1) * k];
                for j in 0..k {
                    dw[i * k + j] = gi * xv.data()[j];
                    dx[j] = dx[j] + row[j] * gi;
                }
            }
            vec![(*w, Tensor::new(vec![m, k], dw)?), (*x, Tensor::vector(dx))]
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let da = g.matmul(&bv.transpose()?)?;
            let db = av.transpose()?.matmul(g)?;
            vec![(*a, da), (*b, db)]
        }
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
        Op::Mul(a, b) => {
            let da = g.zip_map(val(*b), "mul", |g, b| g * b)?;
            let db = g.zip_map(val(*a), "mul", |g, a| g * a)?;
            vec![(*a, da), (*b, db)]
        }
        Op::Scale(a, c) => vec![(*a, g.map(|x| x * *c))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::Sigmoid(a) => vec![(*a, g.zip_map(y, "sigmoid", |g, y| g * y * (T::one() - y))?)],
        Op::Tanh(a) => vec![(*a, g.zip_map(y, "tanh", |g, y| g * (T::one() - y * y))?)],
        Op::Exp(a) => vec![(*a, g.zip_map(y, "exp", |g, y| g * y)?)],
        Op::Log(a) => vec![(*a, g.zip_map(val(*a), "log", |g, x| g / x)?)],
        Op::Clamp(a, lo, hi) => {
            let da = g.zip_map(val(*a), "clamp", |g, x| {
                if x > *lo && x < *hi {
                    g
                } else {
                    T::zero()
                }
            })?;
            vec![(*a, da)]
        }
        Op::Sum(a) => {
            let gv = g.item()?;
            vec![(*a, Tensor::full(val(*a).shape(), gv))]
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            let mut out = Vec::with_capacity(parts.len());
            for &p in parts {
                let n = val(p).len();
                let piece = g.data()[offset..offset + n].to_vec();
                out.push((p, Tensor::new(val(p).shape().to_vec(), piece)?));
                offset += n;
            }
            out
        }
        Op::Slice(a, start) => {
            let mut da = Tensor::zeros(val(*a).shape());
            da.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
            vec![(*a, da)]
        }
        Op::Column(w, col) => {
            let wv = val(*w);
            let (r, c) = wv.dims2("column")?;
            let mut dw = vec![T::zero(); r * c];
            for i in 0..r {
                dw[i * c + col] = g.data()[i];
            }
            vec![(*w, Tensor::new(vec![r, c], dw)?)]
        }
        Op::StackRows(rows) => {
            let k = g.shape()[1];
            rows.iter()
                .enumerate()
                .map(|(i, &r)| (r, Tensor::vector(g.data()[i * k..(i + 1) * k].to_vec())))
                .collect()
        }
        Op::Conv1d {
            input,
            filters,
            bias,
            window,
        } => {
            let (xv, wv) = (val(*input), val(*filters));
            let (n, k) = xv.dims2("conv1d")?;
            let (nf, span) = wv.dims2("conv1d")?;
            let positions = n + 1 - window;
            let mut dx = vec![T::zero(); n * k];
            let mut dw = vec![T::zero(); nf * span];
            let mut db = vec![T::zero(); nf];
            for f in 0..nf {
                let wrow = &wv.data()[f * span..(f + 1) * span];
                for p in 0..positions {
                    let gf = g.data()[f * positions + p];
                    if gf == T::zero() {
                        continue;
                    }
                    db[f] = db[f] + gf;
                    let xwin = &xv.data()[p * k..p * k + span];
                    for s in 0..span {
                        dw[f * span + s] = dw[f * span + s] + gf * xwin[s];
                        dx[p * k + s] = dx[p * k + s] + gf * wrow[s];
                    }
                }
            }
            vec![
                (*input, Tensor::new(vec![n, k], dx)?),
                (*filters, Tensor::new(vec![nf, span], dw)?),
                (*bias, Tensor::vector(db)),
            ]
        }
        Op::MaxOverTime(m, argmax) => {
            let mv = val(*m);
            let (nf, positions) = mv.dims2("max_over_time")?;
            let mut dm = vec![T::zero(); nf * positions];
            for (f, &p) in argmax.iter().enumerate() {
                dm[f * positions + p] = g.data()[f];
            }
            vec![(*m, Tensor::new(vec![nf, positions], dm)?)]
        }
        Op::LogSoftmax(a) => {
            let total = g.sum();
            let da = g.zip_map(y, "log_softmax", |g, ly| g - ly.exp() * total)?;
            vec![(*a, da)]
        }
        Op::Softmax(a) => {
            let dot: T = g.data().iter().zip(y.data()).map(|(&g, &y)| g * y).sum();
            let da = g.zip_map(y, "softmax", |g, y| y * (g - dot))?;
            vec![(*a, da)]
        }
        Op::Pick(a, i) => {
            let mut da = Tensor::zeros(val(*a).shape());
            da.data_mut()[*i] = g.item()?;
            vec![(*a, da)]
        }
    };
    Ok(out)
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(self) -> Arc<Tensor<T>> {
        self.tape.val(self.id)
    }

    /// Scalar value; errors when the variable holds more than one entry.
    pub fn item(self) -> Result<T, TensorError> {
        self.value().item()
    }

    fn unary(self, name: &'static str, op: Op<T>, f: impl Fn(&Tensor<T>) -> Result<Tensor<T>, TensorError>) -> Result<Self, TensorError> {
        let v = f(&self.value())?;
        self.tape.push(v, op, name)
    }

    fn check_same_tape(self, other: Self) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "variables recorded on different tapes"
        );
    }

    /// Matrix-vector product; `self` is the `[m, k]` matrix.
    pub fn matvec(self, x: Self) -> Result<Self, TensorError> {
        self.check_same_tape(x);
        let v = self.value().matvec(&x.value())?;
        self.tape.push(v, Op::MatVec(self.id, x.id), "matvec")
    }

    pub fn matmul(self, other: Self) -> Result<Self, TensorError> {
        self.check_same_tape(other);
        let v = self.value().matmul(&other.value())?;
        self.tape.push(v, Op::MatMul(self.id, other.id), "matmul")
    }

    pub fn add(self, other: Self) -> Result<Self, TensorError> {
        self.check_same_tape(other);
        let v = self.value().zip_map(&other.value(), "add", |a, b| a + b)?;
        self.tape.push(v, Op::Add(self.id, other.id), "add")
    }

    pub fn sub(self, other: Self) -> Result<Self, TensorError> {
        self.check_same_tape(other);
        let v = self.value().zip_map(&other.value(), "sub", |a, b| a - b)?;
        self.tape.push(v, Op::Sub(self.id, other.id), "sub")
    }

    pub fn mul(self, other: Self) -> Result<Self, TensorError> {
        self.check_same_tape(other);
        let v = self.value().zip_map(&other.value(), "mul", |a, b| a * b)?;
        self.tape.push(v, Op::Mul(self.id, other.id), "mul")
    }

    pub fn scale(self, c: T) -> Result<Self, TensorError> {
        self.unary("scale", Op::Scale(self.id, c), |t| Ok(t.map(|x| x * c)))
    }

    pub fn neg(self) -> Result<Self, TensorError> {
        self.scale(-T::one())
    }

    pub fn add_scalar(self, c: T) -> Result<Self, TensorError> {
        self.unary("add_scalar", Op::AddScalar(self.id), |t| Ok(t.map(|x| x + c)))
    }

    pub fn sigmoid(self) -> Result<Self, TensorError> {
        self.unary("sigmoid", Op::Sigmoid(self.id), |t| Ok(t.map(sigmoid)))
    }

    pub fn tanh(self) -> Result<Self, TensorError> {
        self.unary("tanh", Op::Tanh(self.id), |t| Ok(t.map(|x| x.tanh())))
    }

    pub fn exp(self) -> Result<Self, TensorError> {
        self.unary("exp", Op::Exp(self.id), |t| Ok(t.map(|x| x.exp())))
    }

    pub fn log(self) -> Result<Self, TensorError> {
        self.unary("log", Op::Log(self.id), |t| {
            if let Some(bad) = t.data().iter().find(|&&x| x <= T::zero()) {
                return Err(TensorError::Domain {
                    op: "log",
                    detail: format!("non-positive input {bad}"),
                });
            }
            Ok(t.map(|x| x.ln()))
        })
    }

    pub fn clamp(self, lo: T, hi: T) -> Result<Self, TensorError> {
        self.unary("clamp", Op::Clamp(self.id, lo, hi), |t| Ok(t.map(|x| x.max(lo).min(hi))))
    }

    pub fn sum(self) -> Result<Self, TensorError> {
        self.unary("sum", Op::Sum(self.id), |t| Ok(Tensor::scalar(t.sum())))
    }

    /// Concatenates rank-1 variables.
    pub fn concat(parts: &[Self]) -> Result<Self, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat of nothing".into()))?;
        let mut data = Vec::new();
        for p in parts {
            first.check_same_tape(*p);
            let v = p.value();
            if v.rank() != 1 {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: v.shape().to_vec(),
                    rhs: vec![],
                });
            }
            data.extend_from_slice(v.data());
        }
        let ids = parts.iter().map(|p| p.id).collect();
        first.tape.push(Tensor::vector(data), Op::Concat(ids), "concat")
    }

    /// Entries `start..start + len` of a rank-1 variable.
    pub fn slice(self, start: usize, len: usize) -> Result<Self, TensorError> {
        self.unary("slice", Op::Slice(self.id, start), |t| {
            if t.rank() != 1 || start + len > t.len() {
                return Err(TensorError::Index {
                    index: start + len,
                    len: t.len(),
                });
            }
            Ok(Tensor::vector(t.data()[start..start + len].to_vec()))
        })
    }

    /// Column `col` of a `[rows, cols]` matrix, as a rank-1 variable.
    pub fn column(self, col: usize) -> Result<Self, TensorError> {
        self.unary("column", Op::Column(self.id, col), |t| {
            let (r, c) = t.dims2("column")?;
            if col >= c {
                return Err(TensorError::Index { index: col, len: c });
            }
            Ok(Tensor::vector((0..r).map(|i| t.at2(i, col)).collect()))
        })
    }

    /// Stacks equal-length rank-1 variables as the rows of a matrix.
    pub fn stack_rows(rows: &[Self]) -> Result<Self, TensorError> {
        let first = rows
            .first()
            .ok_or_else(|| TensorError::Contract("stack of nothing".into()))?;
        let k = first.value().len();
        let mut data = Vec::with_capacity(rows.len() * k);
        for r in rows {
            first.check_same_tape(*r);
            let v = r.value();
            if v.shape() != [k] {
                return Err(TensorError::Shape {
                    op: "stack_rows",
                    lhs: vec![k],
                    rhs: v.shape().to_vec(),
                });
            }
            data.extend_from_slice(v.data());
        }
        let ids = rows.iter().map(|r| r.id).collect();
        first
            .tape
            .push(Tensor::new(vec![rows.len(), k], data)?, Op::StackRows(ids), "stack_rows")
    }

    /// Narrow 1-D convolution over the rows of `self` (`[n, k]`).
    ///
    /// `filters` is `[F, window * k]` with each row a flattened `[window, k]`
    /// kernel, `bias` is `[F]`. The result is `[F, n - window + 1]`.
    pub fn conv1d(self, filters: Self, bias: Self, window: usize) -> Result<Self, TensorError> {
        self.check_same_tape(filters);
        self.check_same_tape(bias);
        let (xv, wv, bv) = (self.value(), filters.value(), bias.value());
        let (n, k) = xv.dims2("conv1d")?;
        let (nf, span) = wv.dims2("conv1d")?;
        if span != window * k || bv.shape() != [nf] || window == 0 {
            return Err(TensorError::Shape {
                op: "conv1d",
                lhs: wv.shape().to_vec(),
                rhs: vec![nf, window * k],
            });
        }
        if n < window {
            return Err(TensorError::Shape {
                op: "conv1d",
                lhs: xv.shape().to_vec(),
                rhs: vec![window, k],
            });
        }
        let positions = n + 1 - window;
        let mut out = vec![T::zero(); nf * positions];
        for f in 0..nf {
            let wrow = &wv.data()[f * span..(f + 1) * span];
            for p in 0..positions {
                let xwin = &xv.data()[p * k..p * k + span];
                let dot = wrow.iter().zip(xwin).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                out[f * positions + p] = dot + bv.data()[f];
            }
        }
        self.tape.push(
            Tensor::new(vec![nf, positions], out)?,
            Op::Conv1d {
                input: self.id,
                filters: filters.id,
                bias: bias.id,
                window,
            },
            "conv1d",
        )
    }

    /// Row-wise maximum of a `[F, P]` matrix.
    pub fn max_over_time(self) -> Result<Self, TensorError> {
        let v = self.value();
        let (nf, positions) = v.dims2("max_over_time")?;
        if positions == 0 {
            return Err(TensorError::Contract("max over an empty feature map".into()));
        }
        let mut argmax = Vec::with_capacity(nf);
        let mut out = Vec::with_capacity(nf);
        for f in 0..nf {
            let row = &v.data()[f * positions..(f + 1) * positions];
            let mut best = 0;
            for (p, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = p;
                }
            }
            argmax.push(best);
            out.push(row[best]);
        }
        self.tape
            .push(Tensor::vector(out), Op::MaxOverTime(self.id, argmax), "max_over_time")
    }

    pub fn log_softmax(self) -> Result<Self, TensorError> {
        self.unary("log_softmax", Op::LogSoftmax(self.id), |t| t.log_softmax())
    }

    pub fn softmax(self) -> Result<Self, TensorError> {
        self.unary("softmax", Op::Softmax(self.id), |t| t.softmax())
    }

    /// Entry `index` of a rank-1 variable, as a scalar.
    pub fn pick(self, index: usize) -> Result<Self, TensorError> {
        self.unary("pick", Op::Pick(self.id, index), |t| {
            t.data()
                .get(index)
                .map(|&x| Tensor::scalar(x))
                .ok_or(TensorError::Index { index, len: t.len() })
        })
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
