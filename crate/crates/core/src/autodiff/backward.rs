//! Vector-Jacobian products, written once against [`Algebra`].
//!
//! The same rules run either on plain tensors (first-order gradients) or on
//! the tape itself (recorded gradients that can be differentiated again).

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::op::{self, Op};
use crate::error::Result;
use crate::tensor::Tensor;

pub(crate) trait Algebra {
    type V: Clone;
    fn value_of(&self, id: usize) -> Self::V;
    fn shape_of(&self, id: usize) -> Vec<usize>;
    fn node(&self, id: usize) -> (Op, Vec<usize>);
    fn constant(&mut self, t: Tensor) -> Self::V;
    fn apply(&mut self, op: Op, args: &[&Self::V]) -> Result<Self::V>;
    fn value_shape(&self, v: &Self::V) -> Vec<usize>;
}

/// Numeric algebra over the values stored on a tape.
pub(crate) struct Numeric<'a> {
    pub(crate) nodes: &'a [super::Node],
}

impl Algebra for Numeric<'_> {
    type V = Rc<Tensor>;

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes[id].value.clone()
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.nodes[id].value.shape().to_vec()
    }

    fn node(&self, id: usize) -> (Op, Vec<usize>) {
        (self.nodes[id].op.clone(), self.nodes[id].inputs.clone())
    }

    fn constant(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }

    fn apply(&mut self, op: Op, args: &[&Rc<Tensor>]) -> Result<Rc<Tensor>> {
        let vals: Vec<&Tensor> = args.iter().map(|a| a.as_ref()).collect();
        Ok(Rc::new(op::eval(&op, &vals)?))
    }

    fn value_shape(&self, v: &Rc<Tensor>) -> Vec<usize> {
        v.shape().to_vec()
    }
}

/// Recording algebra: every rule application appends nodes to the tape.
pub(crate) struct Recording<'a> {
    pub(crate) tape: &'a mut super::TapeInner,
}

impl Algebra for Recording<'_> {
    type V = usize;

    fn value_of(&self, id: usize) -> usize {
        id
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.tape.nodes[id].value.shape().to_vec()
    }

    fn node(&self, id: usize) -> (Op, Vec<usize>) {
        (self.tape.nodes[id].op.clone(), self.tape.nodes[id].inputs.clone())
    }

    fn constant(&mut self, t: Tensor) -> usize {
        self.tape.push(Op::Const, Vec::new(), t)
    }

    fn apply(&mut self, op: Op, args: &[&usize]) -> Result<usize> {
        let ids: Vec<usize> = args.iter().map(|&&a| a).collect();
        self.tape.apply(op, &ids)
    }

    fn value_shape(&self, v: &usize) -> Vec<usize> {
        self.shape_of(*v)
    }
}

fn reduce_to_rank<A: Algebra>(alg: &mut A, g: A::V, target: usize) -> Result<A::V> {
    if alg.value_shape(&g).len() > target {
        alg.apply(Op::SumBatch, &[&g])
    } else {
        Ok(g)
    }
}

/// Contributions of `g = ∂out/∂node` to each input of `node`; `need[k]` tells
/// whether input `k` leads back to a differentiation target.
pub(crate) fn vjp<A: Algebra>(alg: &mut A, node: usize, g: &A::V, need: &[bool]) -> Result<Vec<Option<A::V>>> {
    let (op, inputs) = alg.node(node);
    let mut out: Vec<Option<A::V>> = vec![None; inputs.len()];
    let x = |alg: &A, k: usize| alg.value_of(inputs[k]);
    match op {
        Op::Leaf | Op::Const => {}
        Op::Add => {
            for k in 0..2 {
                if need[k] {
                    out[k] = Some(g.clone());
                }
            }
        }
        Op::Sub => {
            if need[0] {
                out[0] = Some(g.clone());
            }
            if need[1] {
                out[1] = Some(alg.apply(Op::Scale(-1.0), &[g])?);
            }
        }
        Op::Mul => {
            let (a, b) = (x(alg, 0), x(alg, 1));
            if need[0] {
                out[0] = Some(alg.apply(Op::Mul, &[g, &b])?);
            }
            if need[1] {
                out[1] = Some(alg.apply(Op::Mul, &[g, &a])?);
            }
        }
        Op::Scale(c) => out[0] = Some(alg.apply(Op::Scale(c), &[g])?),
        Op::AddScalar(_) => out[0] = Some(g.clone()),
        Op::Tanh => {
            // g * (1 - y^2)
            let y = alg.value_of(node);
            let y2 = alg.apply(Op::Square, &[&y])?;
            let d = alg.apply(Op::Scale(-1.0), &[&y2])?;
            let d = alg.apply(Op::AddScalar(1.0), &[&d])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &d])?);
        }
        Op::Sigmoid => {
            // g * y * (1 - y)
            let y = alg.value_of(node);
            let one_minus = alg.apply(Op::Scale(-1.0), &[&y])?;
            let one_minus = alg.apply(Op::AddScalar(1.0), &[&one_minus])?;
            let d = alg.apply(Op::Mul, &[&y, &one_minus])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &d])?);
        }
        Op::Softplus => {
            let s = alg.apply(Op::Sigmoid, &[&x(alg, 0)])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &s])?);
        }
        Op::Exp => {
            let y = alg.value_of(node);
            out[0] = Some(alg.apply(Op::Mul, &[g, &y])?);
        }
        Op::Log => {
            let r = alg.apply(Op::Recip, &[&x(alg, 0)])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &r])?);
        }
        Op::Square => {
            let two_x = alg.apply(Op::Scale(2.0), &[&x(alg, 0)])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &two_x])?);
        }
        Op::Sqrt => {
            let y = alg.value_of(node);
            let r = alg.apply(Op::Recip, &[&y])?;
            let r = alg.apply(Op::Scale(0.5), &[&r])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &r])?);
        }
        Op::Recip => {
            let y = alg.value_of(node);
            let y2 = alg.apply(Op::Square, &[&y])?;
            let t = alg.apply(Op::Mul, &[g, &y2])?;
            out[0] = Some(alg.apply(Op::Scale(-1.0), &[&t])?);
        }
        Op::Sin => {
            let c = alg.apply(Op::Cos, &[&x(alg, 0)])?;
            out[0] = Some(alg.apply(Op::Mul, &[g, &c])?);
        }
        Op::Cos => {
            let s = alg.apply(Op::Sin, &[&x(alg, 0)])?;
            let t = alg.apply(Op::Mul, &[g, &s])?;
            out[0] = Some(alg.apply(Op::Scale(-1.0), &[&t])?);
        }
        Op::MatMul => {
            let (a, b) = (x(alg, 0), x(alg, 1));
            let ra = alg.shape_of(inputs[0]).len();
            let rb = alg.shape_of(inputs[1]).len();
            if need[0] {
                let bt = alg.apply(Op::Transpose, &[&b])?;
                let ga = alg.apply(Op::MatMul, &[g, &bt])?;
                out[0] = Some(reduce_to_rank(alg, ga, ra)?);
            }
            if need[1] {
                let at = alg.apply(Op::Transpose, &[&a])?;
                let gb = alg.apply(Op::MatMul, &[&at, g])?;
                out[1] = Some(reduce_to_rank(alg, gb, rb)?);
            }
        }
        Op::Transpose => out[0] = Some(alg.apply(Op::Transpose, &[g])?),
        Op::Reshape(_) => {
            let s: Rc<[usize]> = alg.shape_of(inputs[0]).into();
            out[0] = Some(alg.apply(Op::Reshape(s), &[g])?);
        }
        Op::Sum => {
            let s: Rc<[usize]> = alg.shape_of(inputs[0]).into();
            out[0] = Some(alg.apply(Op::ExpandScalar(s), &[g])?);
        }
        Op::ExpandScalar(_) => {
            let s = alg.apply(Op::Sum, &[g])?;
            let shape: Rc<[usize]> = alg.shape_of(inputs[0]).into();
            out[0] = Some(alg.apply(Op::Reshape(shape), &[&s])?);
        }
        Op::SumBatch => {
            let b = alg.shape_of(inputs[0])[0];
            out[0] = Some(alg.apply(Op::BroadcastBatch(b), &[g])?);
        }
        Op::BroadcastBatch(_) => out[0] = Some(alg.apply(Op::SumBatch, &[g])?),
        Op::Concat => {
            let shapes: Vec<Vec<usize>> = inputs.iter().map(|&i| alg.shape_of(i)).collect();
            let widths = op::input_widths(&shapes);
            let mut start = 0;
            for (k, w) in widths.into_iter().enumerate() {
                if need[k] {
                    let idx: Rc<[usize]> = (start..start + w).collect::<Vec<_>>().into();
                    out[k] = Some(alg.apply(Op::Gather(idx), &[g])?);
                }
                start += w;
            }
        }
        Op::Gather(idx) => {
            let width = *alg.shape_of(inputs[0]).last().unwrap();
            out[0] = Some(alg.apply(Op::ScatterAdd(idx, width), &[g])?);
        }
        Op::ScatterAdd(idx, _) => out[0] = Some(alg.apply(Op::Gather(idx), &[g])?),
        Op::Inverse => {
            // d(A^-1) = -A^-1 dA A^-1  =>  gA = -Y^T g Y^T
            let y = alg.value_of(node);
            let yt = alg.apply(Op::Transpose, &[&y])?;
            let t = alg.apply(Op::MatMul, &[&yt, g])?;
            let t = alg.apply(Op::MatMul, &[&t, &yt])?;
            out[0] = Some(alg.apply(Op::Scale(-1.0), &[&t])?);
        }
    }
    Ok(out)
}
