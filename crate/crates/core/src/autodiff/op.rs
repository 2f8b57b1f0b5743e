use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{self, Tensor};

/// Primitive recorded on the tape. Every backward rule is itself expressed in
/// these primitives, which is what makes the backward pass replayable.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Square,
    Sqrt,
    Recip,
    Sin,
    Cos,
    MatMul,
    Transpose,
    Reshape(Rc<[usize]>),
    Sum,
    ExpandScalar(Rc<[usize]>),
    SumBatch,
    BroadcastBatch(usize),
    Concat,
    Gather(Rc<[usize]>),
    ScatterAdd(Rc<[usize]>, usize),
    Inverse,
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Const => "const",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Softplus => "softplus",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Reshape(_) => "reshape",
            Op::Sum => "sum",
            Op::ExpandScalar(_) => "expand_scalar",
            Op::SumBatch => "sum_batch",
            Op::BroadcastBatch(_) => "broadcast_batch",
            Op::Concat => "concat",
            Op::Gather(_) => "gather",
            Op::ScatterAdd(..) => "scatter_add",
            Op::Inverse => "inverse",
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn arity(op: &Op, args: &[&Tensor], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::invalid(alloc::format!("{} expects {n} inputs, got {}", op.name(), args.len())));
    }
    Ok(())
}

/// Forward evaluation of a primitive.
pub(crate) fn eval(op: &Op, args: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Leaf | Op::Const => Err(Error::invalid("leaves are not evaluated")),
        Op::Add | Op::Sub | Op::Mul => {
            arity(op, args, 2)?;
            let f: fn(f64, f64) -> f64 = match op {
                Op::Add => |a, b| a + b,
                Op::Sub => |a, b| a - b,
                _ => |a, b| a * b,
            };
            args[0].zip_with(args[1], op.name(), f)
        }
        Op::Scale(c) => {
            arity(op, args, 1)?;
            Ok(args[0].scale(*c))
        }
        Op::AddScalar(c) => {
            arity(op, args, 1)?;
            let c = *c;
            Ok(args[0].map(|v| v + c))
        }
        Op::Tanh | Op::Sigmoid | Op::Softplus | Op::Exp | Op::Log | Op::Square | Op::Sqrt | Op::Recip | Op::Sin | Op::Cos => {
            arity(op, args, 1)?;
            let f: fn(f64) -> f64 = match op {
                Op::Tanh => libm::tanh,
                Op::Sigmoid => sigmoid,
                Op::Softplus => softplus,
                Op::Exp => libm::exp,
                Op::Log => libm::log,
                Op::Square => |v| v * v,
                Op::Sqrt => libm::sqrt,
                Op::Recip => |v| 1.0 / v,
                Op::Sin => libm::sin,
                _ => libm::cos,
            };
            Ok(args[0].map(f))
        }
        Op::MatMul => {
            arity(op, args, 2)?;
            tensor::matmul(args[0], args[1])
        }
        Op::Transpose => {
            arity(op, args, 1)?;
            tensor::transpose_last2(args[0])
        }
        Op::Reshape(shape) => {
            arity(op, args, 1)?;
            args[0].reshape(shape)
        }
        Op::Sum => {
            arity(op, args, 1)?;
            Ok(Tensor::scalar(args[0].sum()))
        }
        Op::ExpandScalar(shape) => {
            arity(op, args, 1)?;
            if args[0].len() != 1 {
                return Err(Error::NotScalar(args[0].shape().to_vec()));
            }
            Ok(Tensor::full(shape, args[0].item()))
        }
        Op::SumBatch => {
            arity(op, args, 1)?;
            tensor::sum_batch(args[0])
        }
        Op::BroadcastBatch(b) => {
            arity(op, args, 1)?;
            Ok(tensor::broadcast_batch(args[0], *b))
        }
        Op::Concat => tensor::concat_last(args),
        Op::Gather(idx) => {
            arity(op, args, 1)?;
            tensor::gather_last(args[0], idx)
        }
        Op::ScatterAdd(idx, width) => {
            arity(op, args, 1)?;
            tensor::scatter_add_last(args[0], idx, *width)
        }
        Op::Inverse => {
            arity(op, args, 1)?;
            linalg::inverse(args[0])
        }
    }
}

/// Shapes of each input of a node, used by rules that must undo a reshape.
pub(crate) fn input_widths(shapes: &[Vec<usize>]) -> Vec<usize> {
    shapes.iter().map(|s| s.last().copied().unwrap_or(1)).collect()
}
