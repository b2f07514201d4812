//! Reverse-mode tape over the operators in [`super::ops`].

use super::ops;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Const,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    MaxPool { x: Var, argmax: Vec<usize> },
    Upsample(Var),
    Concat { a: Var, b: Var },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of every tape value, indexed by [`Var`].
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, "input")
    }

    /// An input that never receives a gradient, such as a training batch.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Const, "input")
    }

    fn is_const(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Const)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(store.value(id).clone(), Op::Param(id), store.name(id))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::conv2d(self.value(x), self.value(w), self.value(b))?;
        self.push(y, Op::Conv { x, w, b }, "conv2d")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = ops::sigmoid(self.value(x));
        self.push(y, Op::Sigmoid(x), "sigmoid")
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = ops::maxpool2(self.value(x))?;
        self.push(y, Op::MaxPool { x, argmax }, "maxpool2")
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let y = ops::upsample2(self.value(x));
        self.push(y, Op::Upsample(x), "upsample2")
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_channels(self.value(a), self.value(b))?;
        self.push(y, Op::Concat { a, b }, "concat")
    }

    /// Backpropagate from one or more outputs seeded with their upstream
    /// gradients.
    pub fn backward(&self, seeds: Vec<(Var, Tensor)>) -> Result<Grads> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            if g.shape() != self.value(v).shape() {
                return Err(Error::Shape("seed gradient shape".into()));
            }
            accumulate(&mut grads, v, g)?;
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                grads[i] = Some(g);
                continue;
            }
            let mut accumulate = |v: Var, g: Tensor| -> Result<()> {
                if self.is_const(v) {
                    return Ok(());
                }
                accumulate(&mut grads, v, g)
            };
            match &node.op {
                Op::Const | Op::Leaf | Op::Param(_) => {}
                Op::Conv { x, w, b } => {
                    let need_dx = !self.is_const(*x);
                    let (dx, dw, db) = ops::conv2d_backward_with(self.value(*x), self.value(*w), &g, need_dx)?;
                    if let Some(dx) = dx {
                        accumulate(*x, dx)?;
                    }
                    accumulate(*w, dw)?;
                    accumulate(*b, db)?;
                }
                Op::Relu(x) => accumulate(*x, ops::relu_backward(&node.value, &g))?,
                Op::Sigmoid(x) => accumulate(*x, ops::sigmoid_backward(&node.value, &g))?,
                Op::MaxPool { x, argmax } => {
                    let dx = ops::maxpool2_backward(self.value(*x).shape(), argmax, &g);
                    accumulate(*x, dx)?;
                }
                Op::Upsample(x) => accumulate(*x, ops::upsample2_backward(&g))?,
                Op::Concat { a, b } => {
                    let (ga, gb) = ops::split_channels(&g, self.value(*a).c())?;
                    accumulate(*a, ga)?;
                    accumulate(*b, gb)?;
                }
            }
        }
        Ok(Grads(grads))
    }

    /// Add the gradients of every parameter node issued by `store` into it.
    pub fn accumulate_params(&self, grads: &Grads, store: &mut ParamStore) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.0[i]) {
                if !store.owns(*id) {
                    continue;
                }
                store.accumulate(*id, g)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    g.ensure_finite("backward")?;
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => {
            *slot = Some(g);
            Ok(())
        }
    }
}
