//! Reverse sweep.
//!
//! Every vector-Jacobian product is expressed with the same recorded
//! primitives as the forward pass. With `create_graph` the sweep therefore
//! extends the graph and its results can be differentiated again; without it
//! the sweep runs over detached copies of the forward values and the results
//! are plain constants.

use std::collections::HashMap;

use crate::tensor::Tensor;

use super::graph::{Graph, NodeId, Op, Var, CLAMP_FLOOR};
use super::AutodiffError;

type Result<T> = std::result::Result<T, AutodiffError>;

struct Sweep<'g> {
    graph: &'g Graph,
    create_graph: bool,
    detached: HashMap<NodeId, Var<'g>>,
}

impl<'g> Sweep<'g> {
    /// The forward node as seen by backward rules.
    fn lift(&mut self, id: NodeId) -> Var<'g> {
        if self.create_graph {
            return self.graph.var(id);
        }
        let graph = self.graph;
        *self
            .detached
            .entry(id)
            .or_insert_with(|| graph.constant(graph.value_of(id)))
    }

    fn mask(&self, id: NodeId, keep: impl Fn(f64) -> bool) -> Var<'g> {
        let v = self.graph.value_of(id);
        self.graph.constant(v.map(|x| if keep(x) { 1.0 } else { 0.0 }))
    }

    fn shape(&self, id: NodeId) -> Vec<usize> {
        self.graph.value_of(id).shape().to_vec()
    }

    fn any_below_floor(&self, id: NodeId) -> bool {
        self.graph.value_of(id).data().iter().any(|&x| x <= CLAMP_FLOOR)
    }

    fn vjp(&mut self, id: NodeId, op: &Op, g: Var<'g>, needed: &[bool]) -> Result<Vec<(NodeId, Var<'g>)>> {
        use Op::*;
        let need = |i: NodeId| needed[i];
        let mut out = Vec::new();
        match *op {
            Leaf => {}
            Add(a, b) => {
                if need(a) {
                    out.push((a, g));
                }
                if need(b) {
                    out.push((b, g));
                }
            }
            Sub(a, b) => {
                if need(a) {
                    out.push((a, g));
                }
                if need(b) {
                    out.push((b, g.neg()));
                }
            }
            Mul(a, b) => {
                if need(a) {
                    let vb = self.lift(b);
                    out.push((a, g.mul(&vb)?));
                }
                if need(b) {
                    let va = self.lift(a);
                    out.push((b, g.mul(&va)?));
                }
            }
            Div(a, b) => {
                let vb = self.lift(b);
                if need(a) {
                    out.push((a, g.div(&vb)?));
                }
                if need(b) {
                    let y = self.lift(id);
                    let mut gb = g.mul(&y)?.div(&vb)?.neg();
                    if self.any_below_floor(b) {
                        gb = gb.mul(&self.mask(b, |x| x > CLAMP_FLOOR))?;
                    }
                    out.push((b, gb));
                }
            }
            Neg(a) => out.push((a, g.neg())),
            AddScalar(a, _) => out.push((a, g)),
            MulScalar(a, c) => out.push((a, g.mul_scalar(c))),
            Exp(a) => {
                let y = self.lift(id);
                out.push((a, g.mul(&y)?));
            }
            Log(a) => {
                let va = self.lift(a);
                let mut ga = g.div(&va)?;
                if self.any_below_floor(a) {
                    ga = ga.mul(&self.mask(a, |x| x > CLAMP_FLOOR))?;
                }
                out.push((a, ga));
            }
            Powf(a, p) => {
                let va = self.lift(a);
                out.push((a, g.mul(&va.powf(p - 1.0).mul_scalar(p))?));
            }
            Relu(a) => out.push((a, g.mul(&self.mask(a, |x| x > 0.0))?)),
            ClampMin(a, lo) => out.push((a, g.mul(&self.mask(a, |x| x > lo))?)),
            MatMul(a, b) => {
                if need(a) {
                    let vb = self.lift(b);
                    out.push((a, g.matmul(&vb.transpose()?)?));
                }
                if need(b) {
                    let va = self.lift(a);
                    out.push((b, va.transpose()?.matmul(&g)?));
                }
            }
            Transpose(a) => out.push((a, g.transpose()?)),
            Conv2d { x, w, geom } => {
                if need(x) {
                    let vw = self.lift(w);
                    out.push((x, Var::conv2d_input_grad(&g, &vw, geom)?));
                }
                if need(w) {
                    let vx = self.lift(x);
                    out.push((w, Var::conv2d_weight_grad(&vx, &g, geom)?));
                }
            }
            ConvInputGrad { gy, w, geom } => {
                if need(gy) {
                    let vw = self.lift(w);
                    out.push((gy, self.graph.record(Op::Conv2d { x: g.id, w: vw.id, geom })?));
                }
                if need(w) {
                    let vgy = self.lift(gy);
                    out.push((w, Var::conv2d_weight_grad(&g, &vgy, geom)?));
                }
            }
            ConvWeightGrad { x, gy, geom } => {
                if need(x) {
                    let vgy = self.lift(gy);
                    out.push((x, Var::conv2d_input_grad(&vgy, &g, geom)?));
                }
                if need(gy) {
                    let vx = self.lift(x);
                    out.push((gy, self.graph.record(Op::Conv2d { x: vx.id, w: g.id, geom })?));
                }
            }
            Upsample2(a) => out.push((a, g.sum_pool2()?)),
            SumPool2(a) => out.push((a, g.upsample2()?)),
            Sum(a) => out.push((a, g.broadcast_scalar(&self.shape(a))?)),
            BroadcastScalar(a, _) => out.push((a, g.sum().reshape(&self.shape(a))?)),
            SumAxis(a, axis) => {
                let n = self.shape(a)[axis];
                out.push((a, g.expand_axis(axis, n)?));
            }
            ExpandAxis(a, axis, _) => out.push((a, g.sum_axis(axis)?)),
            ChannelSum(a) => out.push((a, g.channel_broadcast(&self.shape(a))?)),
            ChannelBroadcast(a, _) => out.push((a, g.channel_sum()?)),
            Softmax(a, axis) => {
                let y = self.lift(id);
                let n = self.shape(a)[axis];
                let dot = g.mul(&y)?.sum_axis(axis)?.expand_axis(axis, n)?;
                out.push((a, y.mul(&g.sub(&dot)?)?));
            }
            LogSoftmax(a, axis) => {
                let y = self.lift(id);
                let n = self.shape(a)[axis];
                let total = g.sum_axis(axis)?.expand_axis(axis, n)?;
                out.push((a, g.sub(&y.exp().mul(&total)?)?));
            }
            Concat(ref parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[axis];
                    if need(p) {
                        out.push((p, g.slice(axis, offset, len)?));
                    }
                    offset += len;
                }
            }
            Slice { x, axis, start, len } => {
                let shape = self.shape(x);
                let mut pieces = Vec::new();
                let zeros = |extent: usize| {
                    let mut s = shape.clone();
                    s[axis] = extent;
                    self.graph.constant(Tensor::zeros(&s))
                };
                if start > 0 {
                    pieces.push(zeros(start));
                }
                pieces.push(g);
                let tail = shape[axis] - start - len;
                if tail > 0 {
                    pieces.push(zeros(tail));
                }
                out.push((x, Var::concat(&pieces, axis)?));
            }
            Reshape(a, _) => out.push((a, g.reshape(&self.shape(a))?)),
        }
        Ok(out)
    }
}

impl Graph {
    /// Gradients of the scalar `loss` with respect to each of `wrt`.
    ///
    /// Targets that `loss` does not depend on get a zero gradient. With
    /// `create_graph` the returned nodes are themselves differentiable.
    pub fn backward<'g>(&'g self, loss: Var<'g>, wrt: &[Var<'g>], create_graph: bool) -> Result<Vec<Var<'g>>> {
        for w in wrt.iter().chain(std::iter::once(&loss)) {
            if !std::ptr::eq(w.graph, self) {
                return Err(AutodiffError::ForeignVar);
            }
        }
        let loss_shape = loss.shape();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarLoss(loss_shape));
        }
        if let Some(w) = wrt.iter().find(|w| !w.requires_grad()) {
            return Err(AutodiffError::NotDifferentiable(w.id));
        }

        let n = loss.id + 1;
        let mut needed = vec![false; n];
        for w in wrt {
            if w.id < n {
                needed[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for id in 0..n {
                if !needed[id] && nodes[id].requires_grad && nodes[id].op.inputs().iter().any(|&i| needed[i]) {
                    needed[id] = true;
                }
            }
        }

        let mut grads: Vec<Option<Var<'g>>> = vec![None; n];
        if needed[loss.id] {
            grads[loss.id] = Some(self.constant(Tensor::ones(&loss_shape)));
        }
        let mut sweep = Sweep {
            graph: self,
            create_graph,
            detached: HashMap::new(),
        };
        for id in (0..n).rev() {
            let Some(g) = grads[id] else { continue };
            if !needed[id] {
                continue;
            }
            let op = self.op_of(id);
            for (input, contrib) in sweep.vjp(id, &op, g, &needed)? {
                grads[input] = Some(match grads[input] {
                    Some(acc) => acc.add(&contrib)?,
                    None => contrib,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|w| {
                grads
                    .get(w.id)
                    .copied()
                    .flatten()
                    .unwrap_or_else(|| self.constant(Tensor::zeros(&w.shape())))
            })
            .collect())
    }

    /// First-order gradients as plain tensors.
    pub fn gradients<'g>(&'g self, loss: Var<'g>, wrt: &[Var<'g>]) -> Result<Vec<Tensor>> {
        Ok(self
            .backward(loss, wrt, false)?
            .into_iter()
            .map(|g| g.value())
            .collect())
    }

    /// Differentiable squared norm of `∂loss/∂wrt`.
    pub fn grad_norm_sq<'g>(&'g self, loss: Var<'g>, wrt: Var<'g>) -> Result<Var<'g>> {
        let g = self.backward(loss, &[wrt], true)?[0];
        Ok(g.square().sum())
    }
}
