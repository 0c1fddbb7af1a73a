//! Random differentiable programs and a finite-difference oracle for them.
//!
//! A program is a list of instructions, each a closure over the slots
//! produced so far. Re-running it on a fresh graph with perturbed inputs
//! gives the central differences the autodiff gradients are checked against.
#![allow(dead_code)]

pub mod toy;

use fisherseg::autodiff::{Graph, Var};
use fisherseg::rng::Stream;
use fisherseg::tensor::Tensor;

type Instr = Box<dyn for<'g> Fn(&[Var<'g>]) -> Var<'g>>;

pub struct Program {
    pub inputs: Vec<Tensor>,
    instrs: Vec<Instr>,
    weights: Tensor,
    pub description: Vec<&'static str>,
}

fn rand_tensor(rng: &mut Stream, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * scale).collect()).unwrap()
}

impl Program {
    /// Evaluates the program and returns (inputs as params, scalar loss).
    pub fn run<'g>(&self, g: &'g Graph, inputs: &[Tensor]) -> (Vec<Var<'g>>, Var<'g>) {
        let params: Vec<Var<'g>> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let mut slots = params.clone();
        for ins in &self.instrs {
            let next = ins(&slots);
            slots.push(next);
        }
        let last = *slots.last().unwrap();
        let w = g.constant(self.weights.clone());
        let loss = last.mul(&w).unwrap().sum();
        (params, loss)
    }

    pub fn loss_at(&self, inputs: &[Tensor]) -> f64 {
        let g = Graph::new();
        self.run(&g, inputs).1.item().unwrap()
    }

    /// The input the instruction chain starts from.
    pub fn root(&self) -> usize {
        self.inputs.len() - 1
    }

    /// ‖∂loss/∂root‖² evaluated at `inputs`.
    pub fn grad_norm_at(&self, inputs: &[Tensor]) -> f64 {
        let g = Graph::new();
        let (params, loss) = self.run(&g, inputs);
        g.grad_norm_sq(loss, params[self.root()]).unwrap().item().unwrap()
    }

    /// Random program with `depth` primary operations.
    pub fn random(rng: &mut Stream, depth: usize) -> Program {
        let image = rng.below(2) == 0;
        let inputs = if image {
            let c = 1 + rng.below(2) as usize;
            let h = [4, 6, 8][rng.below(3) as usize];
            let w = [4, 6][rng.below(2) as usize];
            let x = [1 + rng.below(2) as usize, c, h, w];
            let co = 1 + rng.below(3) as usize;
            let k = 1 + rng.below(3) as usize;
            vec![
                rand_tensor(rng, &x, 1.0),
                rand_tensor(rng, &x, 1.0),
                rand_tensor(rng, &[co, c, k, k], 0.7),
                rand_tensor(rng, &[co], 0.5),
            ]
        } else {
            let a = 1 + rng.below(4) as usize;
            let b = 2 + rng.below(3) as usize;
            let d = 1 + rng.below(4) as usize;
            vec![
                rand_tensor(rng, &[a, b], 1.0),
                rand_tensor(rng, &[a, b], 1.0),
                rand_tensor(rng, &[b, d], 0.8),
            ]
        };

        let mut program = Program {
            inputs: inputs.clone(),
            instrs: Vec::new(),
            weights: Tensor::scalar(0.0),
            description: Vec::new(),
        };

        // Shadow evaluation to know shapes and magnitudes while generating.
        let g = Graph::new();
        let mut slots: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let n_inputs = slots.len();

        for _ in 0..depth {
            let cur = slots.len() - 1;
            let cur_shape = slots[cur].shape();
            let (name, ins) = pick_op(rng, &slots, cur, n_inputs, &cur_shape);
            let next = ins(&slots);
            slots.push(next);
            program.instrs.push(ins);
            program.description.push(name);

            let v = next.value();
            let peak = v.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if peak > 3.0 {
                let s = 1.0 / peak;
                let ins: Instr = Box::new(move |sl: &[Var]| sl[sl.len() - 1].mul_scalar(s));
                slots.push(ins(&slots));
                program.instrs.push(ins);
            }
        }
        let last_shape = slots.last().unwrap().shape();
        program.weights = rand_tensor(rng, &last_shape, 1.0);
        program
    }
}

fn same_shape_slots(slots: &[Var], shape: &[usize]) -> Vec<usize> {
    (0..slots.len()).filter(|&i| slots[i].shape() == shape).collect()
}

fn pick_op(rng: &mut Stream, slots: &[Var], cur: usize, n_inputs: usize, shape: &[usize]) -> (&'static str, Instr) {
    let partners = same_shape_slots(slots, shape);
    let partner = partners[rng.below(partners.len() as u64) as usize];
    loop {
        let choice = rng.below(22);
        let op: Option<(&'static str, Instr)> = match choice {
            0 => Some(("exp", Box::new(move |s: &[Var]| s[cur].mul_scalar(0.5).exp()))),
            1 => Some(("log", Box::new(move |s: &[Var]| s[cur].square().add_scalar(0.5).log()))),
            2 => {
                let p = [0.5, 1.5, -1.0, 3.0][rng.below(4) as usize];
                Some(("powf", Box::new(move |s: &[Var]| s[cur].square().add_scalar(0.3).powf(p))))
            }
            3 => Some(("relu", Box::new(move |s: &[Var]| s[cur].relu()))),
            4 => {
                let axis = rng.below(shape.len() as u64) as usize;
                Some(("softmax", Box::new(move |s: &[Var]| s[cur].softmax(axis).unwrap())))
            }
            5 => {
                let axis = rng.below(shape.len() as u64) as usize;
                Some(("log_softmax", Box::new(move |s: &[Var]| s[cur].log_softmax(axis).unwrap())))
            }
            6 => Some(("add", Box::new(move |s: &[Var]| s[cur].add(&s[partner]).unwrap()))),
            7 => Some(("sub", Box::new(move |s: &[Var]| s[cur].sub(&s[partner]).unwrap()))),
            8 => Some(("mul", Box::new(move |s: &[Var]| s[cur].mul(&s[partner]).unwrap()))),
            9 => Some((
                "div",
                Box::new(move |s: &[Var]| s[cur].div(&s[partner].square().add_scalar(0.5)).unwrap()),
            )),
            10 if shape.len() >= 2 => {
                let axis = rng.below(shape.len() as u64) as usize;
                Some(("sum_axis", Box::new(move |s: &[Var]| s[cur].sum_axis(axis).unwrap())))
            }
            11 if shape.len() <= 3 => {
                let axis = rng.below(shape.len() as u64 + 1) as usize;
                Some(("expand_axis", Box::new(move |s: &[Var]| s[cur].expand_axis(axis, 2).unwrap())))
            }
            12 => {
                let axis = rng.below(shape.len() as u64) as usize;
                Some((
                    "concat",
                    Box::new(move |s: &[Var]| Var::concat(&[s[cur], s[partner]], axis).unwrap()),
                ))
            }
            13 => {
                let axis = rng.below(shape.len() as u64) as usize;
                let n = shape[axis];
                (n >= 2).then(|| {
                    let start = rng.below(n as u64 / 2 + 1) as usize;
                    let len = (n - start).max(1);
                    let len = 1 + rng.below(len as u64) as usize;
                    let f: Instr = Box::new(move |s: &[Var]| s[cur].slice(axis, start, len).unwrap());
                    ("slice", f)
                })
            }
            14 if shape.len() == 2 => Some(("transpose", Box::new(move |s: &[Var]| s[cur].transpose().unwrap()))),
            15 if shape.len() == 2 => {
                // Matrix input slot 2 when it fits, otherwise a constant.
                let m_slot = 2;
                if n_inputs == 3 && slots[m_slot].shape()[0] == shape[1] {
                    Some(("matmul", Box::new(move |s: &[Var]| s[cur].matmul(&s[m_slot]).unwrap())))
                } else {
                    let cols = 1 + rng.below(3) as usize;
                    let k = rand_tensor(rng, &[shape[1], cols], 0.8);
                    Some((
                        "matmul_const",
                        Box::new(move |s: &[Var]| {
                            let k = s[cur].graph().constant(k.clone());
                            s[cur].matmul(&k).unwrap()
                        }),
                    ))
                }
            }
            16 if shape.len() == 4 => {
                let stride = 1 + rng.below(2) as usize;
                let pad = rng.below(2) as usize;
                let w_slot = 2;
                let fits = n_inputs == 4 && slots[w_slot].shape()[1] == shape[1];
                let kshape = if fits {
                    slots[w_slot].shape()
                } else {
                    vec![1 + rng.below(2) as usize, shape[1], 3, 3]
                };
                let ok = shape[2] + 2 * pad >= kshape[2] && shape[3] + 2 * pad >= kshape[3];
                ok.then(|| {
                    let f: Instr = if fits {
                        Box::new(move |s: &[Var]| s[cur].conv2d(&s[w_slot], stride, pad).unwrap())
                    } else {
                        let k = rand_tensor(rng, &kshape, 0.6);
                        Box::new(move |s: &[Var]| {
                            let k = s[cur].graph().constant(k.clone());
                            s[cur].conv2d(&k, stride, pad).unwrap()
                        })
                    };
                    ("conv2d", f)
                })
            }
            17 if shape.len() == 4 && shape[2] * shape[3] <= 16 => {
                Some(("upsample2", Box::new(move |s: &[Var]| s[cur].upsample2().unwrap())))
            }
            18 if shape.len() == 4 && shape[2].is_multiple_of(2) && shape[3].is_multiple_of(2) => {
                Some(("sum_pool2", Box::new(move |s: &[Var]| s[cur].sum_pool2().unwrap())))
            }
            19 if shape.len() == 4 && n_inputs == 4 && slots[3].shape()[0] == shape[1] => {
                Some(("bias_add", Box::new(move |s: &[Var]| s[cur].bias_add(&s[3]).unwrap())))
            }
            20 => {
                let flat = vec![shape.iter().product::<usize>()];
                Some(("reshape", Box::new(move |s: &[Var]| s[cur].reshape(&flat).unwrap())))
            }
            21 => {
                let lo = -0.2;
                Some(("clamp_min", Box::new(move |s: &[Var]| s[cur].clamp_min(lo))))
            }
            _ => None,
        };
        if let Some(op) = op {
            return op;
        }
    }
}

/// |a − b| relative to the larger magnitude, floored at `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between autodiff gradients of the loss and
/// central differences with step `h`.
pub fn first_order_error(p: &Program, h: f64, floor: f64) -> f64 {
    let g = Graph::new();
    let (params, loss) = p.run(&g, &p.inputs);
    let grads = g.gradients(loss, &params).unwrap();
    max_fd_error(&p.inputs, &grads, h, floor, |x| p.loss_at(x))
}

/// Same check for the gradient of ‖∂loss/∂root‖².
pub fn second_order_error(p: &Program, h: f64, floor: f64) -> f64 {
    let g = Graph::new();
    let (params, loss) = p.run(&g, &p.inputs);
    let s = g.grad_norm_sq(loss, params[p.root()]).unwrap();
    let grads = g.gradients(s, &params).unwrap();
    max_fd_error(&p.inputs, &grads, h, floor, |x| p.grad_norm_at(x))
}

pub fn max_fd_error(
    inputs: &[Tensor],
    grads: &[Tensor],
    h: f64,
    floor: f64,
    f: impl Fn(&[Tensor]) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let bump = |delta: f64| {
                let mut data = input.to_vec();
                data[i] += delta;
                let mut xs = inputs.to_vec();
                xs[k] = Tensor::new(input.shape(), data).unwrap();
                f(&xs)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let err = rel_err(grads[k].data()[i], fd, floor);
            if err.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(err);
        }
    }
    worst
}
