use std::cell::RefCell;

use crate::kernels::{self, ConvGeom};
use crate::tensor::{Tensor, TensorError};

use super::AutodiffError;

/// Floor applied to the argument of `log` and the denominator of `div`.
pub const CLAMP_FLOOR: f64 = 1e-12;

pub type NodeId = usize;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    AddScalar(NodeId, f64),
    MulScalar(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Powf(NodeId, f64),
    Relu(NodeId),
    ClampMin(NodeId, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Conv2d { x: NodeId, w: NodeId, geom: ConvGeom },
    ConvInputGrad { gy: NodeId, w: NodeId, geom: ConvGeom },
    ConvWeightGrad { x: NodeId, gy: NodeId, geom: ConvGeom },
    Upsample2(NodeId),
    SumPool2(NodeId),
    Sum(NodeId),
    BroadcastScalar(NodeId, Vec<usize>),
    SumAxis(NodeId, usize),
    ExpandAxis(NodeId, usize, usize),
    ChannelSum(NodeId),
    ChannelBroadcast(NodeId, Vec<usize>),
    Softmax(NodeId, usize),
    LogSoftmax(NodeId, usize),
    Concat(Vec<NodeId>, usize),
    Slice { x: NodeId, axis: usize, start: usize, len: usize },
    Reshape(NodeId, Vec<usize>),
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Neg(a) | AddScalar(a, _) | MulScalar(a, _) | Exp(a) | Log(a) | Powf(a, _) | Relu(a)
            | ClampMin(a, _) | Transpose(a) | Upsample2(a) | SumPool2(a) | Sum(a)
            | BroadcastScalar(a, _) | SumAxis(a, _) | ExpandAxis(a, _, _) | ChannelSum(a)
            | ChannelBroadcast(a, _) | Softmax(a, _) | LogSoftmax(a, _) | Reshape(a, _) => vec![*a],
            Conv2d { x, w, .. } => vec![*x, *w],
            ConvInputGrad { gy, w, .. } => vec![*gy, *w],
            ConvWeightGrad { x, gy, .. } => vec![*x, *gy],
            Concat(xs, _) => xs.clone(),
            Slice { x, .. } => vec![*x],
        }
    }
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

/// Append-only record of a differentiable computation.
///
/// Nodes are stored in creation order, which is also a topological order.
/// A graph is single-threaded; build one per step or per worker.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::Tensor(TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

fn invalid(op: &'static str, msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Tensor(TensorError::Invalid { op, msg: msg.into() })
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(), AutodiffError> {
    if axis >= shape.len() {
        return Err(invalid(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that gradients may be taken with respect to.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push_node(Op::Leaf, value, true)
    }

    /// Leaf that is never differentiated.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(Op::Leaf, value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push_node(&self, op: Op, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn var(&self, id: NodeId) -> Var<'_> {
        Var { graph: self, id }
    }

    pub(crate) fn value_of(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn requires_grad_of(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    pub(crate) fn op_of(&self, id: NodeId) -> Op {
        self.nodes.borrow()[id].op.clone()
    }

    /// Evaluates `op`, records it and returns the new node.
    pub(crate) fn record(&self, op: Op) -> Result<Var<'_>, AutodiffError> {
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let value = evaluate(&op, &nodes)?;
            let rg = op.inputs().iter().any(|&i| nodes[i].requires_grad);
            (value, rg)
        };
        Ok(self.push_node(op, value, requires_grad))
    }

    /// Recomputes every recorded operation from its stored inputs and checks
    /// the result against the stored value bit for bit.
    pub fn replay_matches(&self) -> bool {
        let nodes = self.nodes.borrow();
        nodes.iter().all(|node| match node.op {
            Op::Leaf => true,
            ref op => match evaluate(op, &nodes) {
                Ok(v) => {
                    v.shape() == node.value.shape()
                        && v.data()
                            .iter()
                            .zip(node.value.data())
                            .all(|(a, b)| a.to_bits() == b.to_bits())
                }
                Err(_) => false,
            },
        })
    }
}

fn evaluate(op: &Op, nodes: &[Node]) -> Result<Tensor, AutodiffError> {
    use Op::*;
    let v = |id: NodeId| &nodes[id].value;
    let same = |name: &'static str, a: NodeId, b: NodeId| -> Result<(), AutodiffError> {
        if v(a).shape() != v(b).shape() {
            return Err(mismatch(name, v(a).shape(), v(b).shape()));
        }
        Ok(())
    };
    Ok(match op {
        Leaf => return Err(invalid("leaf", "leaves hold values, not operations")),
        Add(a, b) => {
            same("add", *a, *b)?;
            zip_map(v(*a), v(*b), |x, y| x + y)
        }
        Sub(a, b) => {
            same("sub", *a, *b)?;
            zip_map(v(*a), v(*b), |x, y| x - y)
        }
        Mul(a, b) => {
            same("mul", *a, *b)?;
            zip_map(v(*a), v(*b), |x, y| x * y)
        }
        Div(a, b) => {
            same("div", *a, *b)?;
            zip_map(v(*a), v(*b), |x, y| x / y.max(CLAMP_FLOOR))
        }
        Neg(a) => v(*a).map(|x| -x),
        AddScalar(a, c) => v(*a).map(|x| x + c),
        MulScalar(a, c) => v(*a).map(|x| x * c),
        Exp(a) => v(*a).map(f64::exp),
        Log(a) => v(*a).map(|x| x.max(CLAMP_FLOOR).ln()),
        Powf(a, p) => v(*a).map(|x| x.powf(*p)),
        Relu(a) => v(*a).map(|x| x.max(0.0)),
        ClampMin(a, lo) => v(*a).map(|x| x.max(*lo)),
        MatMul(a, b) => {
            let (sa, sb) = (v(*a).shape(), v(*b).shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(mismatch("matmul", sa, sb));
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut out = vec![0.0; m * n];
            kernels::gemm(m, k, n, v(*a).data(), false, v(*b).data(), false, 0.0, &mut out);
            Tensor::from_parts(vec![m, n], out)
        }
        Transpose(a) => {
            let s = v(*a).shape();
            if s.len() != 2 {
                return Err(invalid("transpose", format!("expected a matrix, got {s:?}")));
            }
            Tensor::from_parts(vec![s[1], s[0]], kernels::transpose(s[0], s[1], v(*a).data()))
        }
        Conv2d { x, w, geom } => {
            if v(*x).shape() != geom.input_shape() || v(*w).shape() != geom.weight_shape() {
                return Err(mismatch("conv2d", v(*x).shape(), v(*w).shape()));
            }
            Tensor::from_parts(geom.output_shape().to_vec(), kernels::conv2d(geom, v(*x).data(), v(*w).data()))
        }
        ConvInputGrad { gy, w, geom } => {
            if v(*gy).shape() != geom.output_shape() || v(*w).shape() != geom.weight_shape() {
                return Err(mismatch("conv2d_input_grad", v(*gy).shape(), v(*w).shape()));
            }
            Tensor::from_parts(
                geom.input_shape().to_vec(),
                kernels::conv2d_input_grad(geom, v(*gy).data(), v(*w).data()),
            )
        }
        ConvWeightGrad { x, gy, geom } => {
            if v(*x).shape() != geom.input_shape() || v(*gy).shape() != geom.output_shape() {
                return Err(mismatch("conv2d_weight_grad", v(*x).shape(), v(*gy).shape()));
            }
            Tensor::from_parts(
                geom.weight_shape().to_vec(),
                kernels::conv2d_weight_grad(geom, v(*x).data(), v(*gy).data()),
            )
        }
        Upsample2(a) => {
            let s = v(*a).shape();
            if s.len() < 2 {
                return Err(invalid("upsample2", format!("needs two spatial axes, got {s:?}")));
            }
            let mut shape = s.to_vec();
            let r = shape.len();
            shape[r - 2] *= 2;
            shape[r - 1] *= 2;
            Tensor::from_parts(shape, kernels::upsample2(s, v(*a).data()))
        }
        SumPool2(a) => {
            let s = v(*a).shape();
            let r = s.len();
            if r < 2 || s[r - 2] % 2 != 0 || s[r - 1] % 2 != 0 {
                return Err(invalid("sum_pool2", format!("needs even spatial axes, got {s:?}")));
            }
            let mut shape = s.to_vec();
            shape[r - 2] /= 2;
            shape[r - 1] /= 2;
            Tensor::from_parts(shape, kernels::sum_pool2(s, v(*a).data()))
        }
        Sum(a) => Tensor::scalar(v(*a).sum()),
        BroadcastScalar(a, shape) => {
            let x = v(*a).item().ok_or_else(|| {
                invalid("broadcast_scalar", format!("input must hold one value, got {:?}", v(*a).shape()))
            })?;
            Tensor::full(shape, x)
        }
        SumAxis(a, axis) => {
            let s = v(*a).shape();
            check_axis("sum_axis", s, *axis)?;
            let mut shape = s.to_vec();
            shape.remove(*axis);
            Tensor::from_parts(shape, kernels::sum_axis(s, *axis, v(*a).data()))
        }
        ExpandAxis(a, axis, n) => {
            let s = v(*a).shape();
            if *axis > s.len() {
                return Err(invalid("expand_axis", format!("axis {axis} out of range for {s:?}")));
            }
            let mut shape = s.to_vec();
            shape.insert(*axis, *n);
            Tensor::from_parts(shape, kernels::expand_axis(s, *axis, *n, v(*a).data()))
        }
        ChannelSum(a) => {
            let s = v(*a).shape();
            check_axis("channel_sum", s, 1)?;
            Tensor::from_parts(vec![s[1]], kernels::channel_sum(s, v(*a).data()))
        }
        ChannelBroadcast(a, shape) => {
            let s = v(*a).shape();
            if shape.len() < 2 || s != [shape[1]] {
                return Err(mismatch("channel_broadcast", s, shape));
            }
            Tensor::from_parts(shape.clone(), kernels::channel_broadcast(shape, v(*a).data()))
        }
        Softmax(a, axis) => {
            check_axis("softmax", v(*a).shape(), *axis)?;
            Tensor::from_parts(v(*a).shape().to_vec(), kernels::softmax(v(*a).shape(), *axis, v(*a).data()))
        }
        LogSoftmax(a, axis) => {
            check_axis("log_softmax", v(*a).shape(), *axis)?;
            Tensor::from_parts(
                v(*a).shape().to_vec(),
                kernels::log_softmax(v(*a).shape(), *axis, v(*a).data()),
            )
        }
        Concat(parts, axis) => {
            let first = v(parts[0]).shape();
            check_axis("concat", first, *axis)?;
            let mut shape = first.to_vec();
            shape[*axis] = 0;
            for &p in parts {
                let s = v(p).shape();
                let compatible = s.len() == first.len()
                    && s.iter().zip(first).enumerate().all(|(i, (a, b))| i == *axis || a == b);
                if !compatible {
                    return Err(mismatch("concat", first, s));
                }
                shape[*axis] += s[*axis];
            }
            let views: Vec<(&[usize], &[f64])> = parts.iter().map(|&p| (v(p).shape(), v(p).data())).collect();
            Tensor::from_parts(shape, kernels::concat(&views, *axis))
        }
        Slice { x, axis, start, len } => {
            let s = v(*x).shape();
            check_axis("slice", s, *axis)?;
            if start + len > s[*axis] {
                return Err(invalid("slice", format!("{start}..{} exceeds axis of length {}", start + len, s[*axis])));
            }
            let mut shape = s.to_vec();
            shape[*axis] = *len;
            Tensor::from_parts(shape, kernels::slice_axis(s, *axis, *start, *len, v(*x).data()))
        }
        Reshape(a, shape) => v(*a).reshaped(shape)?,
    })
}
