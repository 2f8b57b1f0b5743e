//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Gradients come
//! in two flavours:
//!
//! * [`grad`] runs the backward pass numerically and returns plain tensors.
//! * [`grad_graph`] records the backward pass onto the same tape, so the
//!   returned gradients are ordinary tracked variables. Differentiating a
//!   function of them again ([`grad2`]) yields exact second-order mixed
//!   derivatives; this is how losses on `∂H/∂q`, `∂H/∂p` are trained.
//!
//! ```
//! use geohnn_core::autodiff::{grad, grad_graph, Tape};
//! use geohnn_core::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.var(Tensor::scalar(2.0));
//! let y = x.mul(&x).unwrap().mul(&x).unwrap(); // x^3
//! let dy = grad_graph(&y, &[&x]).unwrap().remove(0); // 3x^2, recorded
//! let d2y = grad(&dy, &[&x]).unwrap().remove(0); // 6x
//! assert!((d2y.item() - 12.0).abs() < 1e-12);
//! ```

mod backward;
mod check;
mod op;

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

pub use check::{central_difference, central_difference4, check_grad};
use op::Op;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Rc<Tensor>,
    /// Depends on at least one leaf variable.
    requires_grad: bool,
    /// Produced by (or depends on) a recorded backward pass.
    from_backward: bool,
    /// Depends on a gradient that was computed without recording.
    untracked: bool,
}

pub(crate) struct TapeInner {
    nodes: Vec<Node>,
    checked: bool,
    recording_backward: bool,
    non_finite: Option<&'static str>,
}

impl TapeInner {
    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor) -> usize {
        let requires_grad = match op {
            Op::Leaf => true,
            Op::Const => false,
            _ => inputs.iter().any(|&i| self.nodes[i].requires_grad),
        };
        let from_backward = self.recording_backward || inputs.iter().any(|&i| self.nodes[i].from_backward);
        let untracked = inputs.iter().any(|&i| self.nodes[i].untracked);
        if self.checked && self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node { op, inputs, value: Rc::new(value), requires_grad, from_backward, untracked });
        self.nodes.len() - 1
    }

    fn apply(&mut self, op: Op, inputs: &[usize]) -> Result<usize> {
        let value = {
            let vals: Vec<&Tensor> = inputs.iter().map(|&i| self.nodes[i].value.as_ref()).collect();
            op::eval(&op, &vals)?
        };
        Ok(self.push(op, inputs.to_vec(), value))
    }
}

/// Append-only record of operations. Cloning a `Tape` yields another handle
/// to the same record.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A tape in checked mode: the first non-finite value is remembered and
    /// reported by every subsequent gradient call.
    pub fn new() -> Self {
        Self::with_checks(true)
    }

    pub fn unchecked() -> Self {
        Self::with_checks(false)
    }

    pub fn with_checks(checked: bool) -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                checked,
                recording_backward: false,
                non_finite: None,
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// A tracked leaf.
    pub fn var(&self, value: Tensor) -> Var {
        let id = self.inner.borrow_mut().push(Op::Leaf, Vec::new(), value);
        Var { tape: self.clone(), id }
    }

    /// An untracked constant.
    pub fn constant(&self, value: Tensor) -> Var {
        let id = self.inner.borrow_mut().push(Op::Const, Vec::new(), value);
        Var { tape: self.clone(), id }
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// `Err(NonFinite)` if checked mode saw a NaN or infinity.
    pub fn status(&self) -> Result<()> {
        match self.inner.borrow().non_finite {
            Some(op) => Err(Error::NonFinite { op }),
            None => Ok(()),
        }
    }

    fn apply(&self, op: Op, inputs: &[&Var]) -> Result<Var> {
        for v in inputs {
            if !v.tape.same(self) {
                return Err(Error::ForeignTape);
            }
        }
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let id = self.inner.borrow_mut().apply(op, &ids)?;
        Ok(Var { tape: self.clone(), id })
    }
}

/// A value on a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

macro_rules! unary {
    ($($name:ident => $op:expr),* $(,)?) => {
        $(
            pub fn $name(&self) -> Var {
                self.tape.apply($op, &[self]).expect("unary op cannot fail")
            }
        )*
    };
}

impl Var {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.tape.apply(Op::Add, &[self, other])
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.tape.apply(Op::Sub, &[self, other])
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.tape.apply(Op::Mul, &[self, other])
    }

    pub fn div(&self, other: &Var) -> Result<Var> {
        self.mul(&other.recip())
    }

    pub fn scale(&self, c: f64) -> Var {
        self.tape.apply(Op::Scale(c), &[self]).expect("unary op cannot fail")
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.tape.apply(Op::AddScalar(c), &[self]).expect("unary op cannot fail")
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    unary! {
        tanh => Op::Tanh,
        sigmoid => Op::Sigmoid,
        softplus => Op::Softplus,
        exp => Op::Exp,
        ln => Op::Log,
        square => Op::Square,
        sqrt => Op::Sqrt,
        recip => Op::Recip,
        sin => Op::Sin,
        cos => Op::Cos,
    }

    /// Matrix product over the last two axes (see [`Tensor::matmul`]).
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        self.tape.apply(Op::MatMul, &[self, other])
    }

    pub fn transpose(&self) -> Result<Var> {
        self.tape.apply(Op::Transpose, &[self])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        self.tape.apply(Op::Reshape(shape.into()), &[self])
    }

    /// Sum of all entries, as a rank-0 tensor.
    pub fn sum(&self) -> Var {
        self.tape.apply(Op::Sum, &[self]).expect("unary op cannot fail")
    }

    pub fn mean(&self) -> Var {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand_scalar(&self, shape: &[usize]) -> Result<Var> {
        self.tape.apply(Op::ExpandScalar(shape.into()), &[self])
    }

    /// `[B, ...] -> [...]`
    pub fn sum_batch(&self) -> Result<Var> {
        self.tape.apply(Op::SumBatch, &[self])
    }

    /// `[...] -> [B, ...]`
    pub fn broadcast_batch(&self, batch: usize) -> Var {
        self.tape.apply(Op::BroadcastBatch(batch), &[self]).expect("unary op cannot fail")
    }

    /// Columns `idx` of the last axis.
    pub fn gather(&self, idx: &[usize]) -> Result<Var> {
        self.tape.apply(Op::Gather(idx.into()), &[self])
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Var> {
        let idx: Vec<usize> = (start..start + len).collect();
        self.gather(&idx)
    }

    /// Adds column `c` into column `idx[c]` of a zero tensor of last-axis width `width`.
    pub fn scatter_add(&self, idx: &[usize], width: usize) -> Result<Var> {
        self.tape.apply(Op::ScatterAdd(idx.into(), width), &[self])
    }

    /// Inverse of a single square matrix.
    pub fn inverse(&self) -> Result<Var> {
        self.tape.apply(Op::Inverse, &[self])
    }

    /// Sum of the elementwise product.
    pub fn dot(&self, other: &Var) -> Result<Var> {
        Ok(self.mul(other)?.sum())
    }

    /// Row sums of a `[B, k]` tensor as `[B, 1]`.
    pub fn row_sum(&self) -> Result<Var> {
        let k = *self.shape().last().unwrap_or(&1);
        let ones = self.tape.constant(Tensor::ones(&[k, 1]));
        self.matmul(&ones)
    }
}

/// Concatenation along the last axis.
pub fn concat(parts: &[&Var]) -> Result<Var> {
    let first = parts.first().ok_or_else(|| Error::invalid("concat of zero variables"))?;
    first.tape.apply(Op::Concat, parts)
}

/// `pᵀ A p` for a vector `p` and a square matrix `A`.
pub fn quadratic_form(p: &Var, a: &Var) -> Result<Var> {
    let n = p.value().len();
    let row = p.reshape(&[1, n])?;
    let col = p.reshape(&[n, 1])?;
    row.matmul(a)?.matmul(&col)?.reshape(&[])
}

struct Prepared {
    out: usize,
    wrt: Vec<usize>,
    lo: usize,
    reach: Vec<bool>,
}

fn prepare(output: &Var, wrt: &[&Var]) -> Result<Prepared> {
    let tape = &output.tape;
    tape.status()?;
    let out_shape = output.shape();
    if output.value().len() != 1 {
        return Err(Error::NotScalar(out_shape));
    }
    for w in wrt {
        if !w.tape.same(tape) {
            return Err(Error::ForeignTape);
        }
    }
    let ids: Vec<usize> = wrt.iter().map(|w| w.id).collect();
    let out = output.id;
    let lo = ids.iter().copied().min().unwrap_or(out + 1);
    let inner = tape.inner.borrow();
    let mut reach = vec![false; out + 1];
    for &w in &ids {
        if w <= out {
            reach[w] = true;
        }
    }
    for i in lo..=out {
        if !reach[i] {
            reach[i] = inner.nodes[i].inputs.iter().any(|&k| reach[k]);
        }
    }
    Ok(Prepared { out, wrt: ids, lo, reach })
}

fn run_backward<A: backward::Algebra>(alg: &mut A, p: &Prepared) -> Result<Vec<Option<A::V>>> {
    let mut found: Vec<Option<A::V>> = vec![None; p.wrt.len()];
    if p.lo > p.out || !p.reach[p.out] {
        return Ok(found);
    }
    let mut adj: Vec<Option<A::V>> = vec![None; p.out + 1];
    let seed = alg.constant(Tensor::ones(&alg.shape_of(p.out)));
    adj[p.out] = Some(seed);
    for i in (p.lo..=p.out).rev() {
        if !p.reach[i] {
            continue;
        }
        let Some(g) = adj[i].take() else { continue };
        for (k, &w) in p.wrt.iter().enumerate() {
            if w == i {
                found[k] = Some(g.clone());
            }
        }
        let (_, inputs) = alg.node(i);
        // differentiation targets are treated as independent inputs
        if inputs.is_empty() || p.wrt.contains(&i) {
            continue;
        }
        let need: Vec<bool> = inputs.iter().map(|&k| p.reach[k]).collect();
        let contribs = backward::vjp(alg, i, &g, &need)?;
        for (&k, c) in inputs.iter().zip(contribs) {
            if let Some(c) = c {
                adj[k] = Some(match adj[k].take() {
                    None => c,
                    Some(a) => alg.apply(Op::Add, &[&a, &c])?,
                });
            }
        }
    }
    Ok(found)
}

/// `∂output/∂wrtᵢ` as plain tensors; inputs that do not influence the output
/// get zeros.
///
/// The targets are treated as independent variables: if one target was
/// computed from another, the result is the partial derivative holding the
/// other fixed (what Hamilton's equations need when `q` and `p` come out of
/// earlier integration steps).
pub fn grad(output: &Var, wrt: &[&Var]) -> Result<Vec<Tensor>> {
    let p = prepare(output, wrt)?;
    let inner = output.tape.inner.borrow();
    let mut alg = backward::Numeric { nodes: &inner.nodes };
    let found = run_backward(&mut alg, &p)?;
    Ok(found
        .into_iter()
        .zip(wrt)
        .map(|(g, w)| match g {
            Some(t) => Rc::try_unwrap(t).unwrap_or_else(|rc| (*rc).clone()),
            None => Tensor::zeros(inner.nodes[w.id].value.shape()),
        })
        .collect())
}

/// Gradients recorded on the tape: the results are tracked variables and can
/// be differentiated again.
pub fn grad_graph(output: &Var, wrt: &[&Var]) -> Result<Vec<Var>> {
    let p = prepare(output, wrt)?;
    let tape = output.tape.clone();
    let found = {
        let mut inner = tape.inner.borrow_mut();
        inner.recording_backward = true;
        let res = run_backward(&mut backward::Recording { tape: &mut inner }, &p);
        inner.recording_backward = false;
        res?
    };
    Ok(found
        .into_iter()
        .zip(wrt)
        .map(|(g, w)| match g {
            Some(id) => Var { tape: tape.clone(), id },
            None => {
                let zeros = Tensor::zeros(&w.shape());
                tape.constant(zeros)
            }
        })
        .collect())
}

/// Gradients computed numerically but placed on the tape as constants. Any
/// attempt to differentiate through them with [`grad2`] is rejected.
pub fn grad_untracked(output: &Var, wrt: &[&Var]) -> Result<Vec<Var>> {
    let grads = grad(output, wrt)?;
    let tape = output.tape.clone();
    Ok(grads
        .into_iter()
        .map(|g| {
            let v = tape.constant(g);
            tape.inner.borrow_mut().nodes[v.id].untracked = true;
            v
        })
        .collect())
}

/// Second-order derivatives: `output` must have been built from at least one
/// recorded gradient ([`grad_graph`]) and from no untracked ones.
pub fn grad2(output: &Var, wrt: &[&Var]) -> Result<Vec<Tensor>> {
    {
        let inner = output.tape.inner.borrow();
        let node = &inner.nodes[output.id];
        if node.untracked || !node.from_backward {
            return Err(Error::SecondOrderNotEnabled);
        }
    }
    grad(output, wrt)
}

