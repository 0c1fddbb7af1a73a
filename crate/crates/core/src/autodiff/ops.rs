//! Differentiable primitives exposed as methods on [`Var`].

use crate::kernels::ConvGeom;
use crate::tensor::{Tensor, TensorError};

use super::graph::{Graph, NodeId, Op, Var};
use super::AutodiffError;

type Result<T> = std::result::Result<T, AutodiffError>;

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad_of(self.id)
    }

    /// Value of a one-element node.
    pub fn item(&self) -> Option<f64> {
        self.value().item()
    }

    /// Constant copy of this node's value, cut off from the graph's gradient flow.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant(self.value())
    }

    fn same_graph(&self, other: &Var<'g>) -> Result<()> {
        if std::ptr::eq(self.graph, other.graph) {
            Ok(())
        } else {
            Err(AutodiffError::ForeignVar)
        }
    }

    fn unary(&self, op: Op) -> Var<'g> {
        self.graph.record(op).expect("unary primitives accept any shape")
    }

    fn binary(&self, other: &Var<'g>, op: Op) -> Result<Var<'g>> {
        self.same_graph(other)?;
        self.graph.record(op)
    }

    pub fn add(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Mul(self.id, other.id))
    }

    /// Elementwise quotient; the denominator is clamped to at least 1e-12.
    pub fn div(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Div(self.id, other.id))
    }

    pub fn neg(&self) -> Var<'g> {
        self.unary(Op::Neg(self.id))
    }

    pub fn add_scalar(&self, c: f64) -> Var<'g> {
        self.unary(Op::AddScalar(self.id, c))
    }

    pub fn mul_scalar(&self, c: f64) -> Var<'g> {
        self.unary(Op::MulScalar(self.id, c))
    }

    pub fn exp(&self) -> Var<'g> {
        self.unary(Op::Exp(self.id))
    }

    /// Natural log of the argument clamped to at least 1e-12.
    pub fn log(&self) -> Var<'g> {
        self.unary(Op::Log(self.id))
    }

    pub fn powf(&self, p: f64) -> Var<'g> {
        self.unary(Op::Powf(self.id, p))
    }

    pub fn square(&self) -> Var<'g> {
        self.mul(self).expect("same shape")
    }

    pub fn relu(&self) -> Var<'g> {
        self.unary(Op::Relu(self.id))
    }

    pub fn clamp_min(&self, lo: f64) -> Var<'g> {
        self.unary(Op::ClampMin(self.id, lo))
    }

    pub fn matmul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::MatMul(self.id, other.id))
    }

    pub fn transpose(&self) -> Result<Var<'g>> {
        self.graph.record(Op::Transpose(self.id))
    }

    /// 2-D convolution of an NCHW input with OIHW weights and zero padding.
    pub fn conv2d(&self, weight: &Var<'g>, stride: usize, pad: usize) -> Result<Var<'g>> {
        self.same_graph(weight)?;
        let geom = ConvGeom::new(&self.shape(), &weight.shape(), stride, pad).ok_or_else(|| {
            AutodiffError::Tensor(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape(),
                rhs: weight.shape(),
            })
        })?;
        self.graph.record(Op::Conv2d {
            x: self.id,
            w: weight.id,
            geom,
        })
    }

    pub(crate) fn conv2d_input_grad(gy: &Var<'g>, w: &Var<'g>, geom: ConvGeom) -> Result<Var<'g>> {
        gy.same_graph(w)?;
        gy.graph.record(Op::ConvInputGrad { gy: gy.id, w: w.id, geom })
    }

    pub(crate) fn conv2d_weight_grad(x: &Var<'g>, gy: &Var<'g>, geom: ConvGeom) -> Result<Var<'g>> {
        x.same_graph(gy)?;
        x.graph.record(Op::ConvWeightGrad { x: x.id, gy: gy.id, geom })
    }

    /// Nearest-neighbour ×2 upsampling of the two trailing axes.
    pub fn upsample2(&self) -> Result<Var<'g>> {
        self.graph.record(Op::Upsample2(self.id))
    }

    pub fn sum_pool2(&self) -> Result<Var<'g>> {
        self.graph.record(Op::SumPool2(self.id))
    }

    /// Sum of all elements as a 0-d tensor.
    pub fn sum(&self) -> Var<'g> {
        self.unary(Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'g> {
        let n = self.graph.nodes.borrow()[self.id].value.len().max(1);
        self.sum().mul_scalar(1.0 / n as f64)
    }

    pub fn broadcast_scalar(&self, shape: &[usize]) -> Result<Var<'g>> {
        self.graph.record(Op::BroadcastScalar(self.id, shape.to_vec()))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'g>> {
        self.graph.record(Op::SumAxis(self.id, axis))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'g>> {
        let n = self.shape().get(axis).copied().unwrap_or(1).max(1);
        Ok(self.sum_axis(axis)?.mul_scalar(1.0 / n as f64))
    }

    /// Inserts a new axis of length `n` at `axis`, repeating values along it.
    pub fn expand_axis(&self, axis: usize, n: usize) -> Result<Var<'g>> {
        self.graph.record(Op::ExpandAxis(self.id, axis, n))
    }

    pub fn channel_sum(&self) -> Result<Var<'g>> {
        self.graph.record(Op::ChannelSum(self.id))
    }

    pub fn channel_broadcast(&self, shape: &[usize]) -> Result<Var<'g>> {
        self.graph.record(Op::ChannelBroadcast(self.id, shape.to_vec()))
    }

    /// Adds a per-channel bias vector along axis 1.
    pub fn bias_add(&self, bias: &Var<'g>) -> Result<Var<'g>> {
        self.same_graph(bias)?;
        bias.channel_broadcast(&self.shape())?.add(self)
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'g>> {
        self.graph.record(Op::Softmax(self.id, axis))
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Var<'g>> {
        self.graph.record(Op::LogSoftmax(self.id, axis))
    }

    pub fn concat(parts: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let first = parts.first().ok_or_else(|| {
            AutodiffError::Tensor(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            })
        })?;
        for p in parts {
            first.same_graph(p)?;
        }
        first.graph.record(Op::Concat(parts.iter().map(|p| p.id).collect(), axis))
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'g>> {
        self.graph.record(Op::Slice {
            x: self.id,
            axis,
            start,
            len,
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g>> {
        self.graph.record(Op::Reshape(self.id, shape.to_vec()))
    }
}
