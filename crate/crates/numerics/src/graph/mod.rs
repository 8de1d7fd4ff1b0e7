//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the nodes once in reverse recording order and
//! accumulates (sums) gradients into each input, so fan-out is handled by
//! construction.

mod conv;
mod elementwise;
mod linalg;
mod loss;

pub use loss::softmax_in_place;

use crate::error::{NumericsError, Result};
use crate::kernels::ConvGeometry;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Infer,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    AddRowBias {
        x: Var,
        bias: Var,
    },
    AddChannelBias {
        x: Var,
        bias: Var,
        channels: usize,
        plane: usize,
    },
    Scale {
        x: Var,
        factor: f32,
    },
    MulConst {
        x: Var,
        mask: Tensor,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Narrow {
        x: Var,
        outer: usize,
        dim: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Reshape {
        x: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeometry,
        batch: usize,
        out_channels: usize,
    },
    Upsample {
        x: Var,
        factor: usize,
        planes: usize,
        height: usize,
        width: usize,
    },
    Softmax {
        x: Var,
        classes: usize,
    },
    CrossEntropy {
        probs: Var,
        onehot: Tensor,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    MeanSquaredError {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf whose gradient is tracked (parameters, inputs under test).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a tracked leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let buf = self.grads.get(v.0)?.as_ref()?;
        Some(
            Tensor::new(self.nodes[v.0].value.shape().to_vec(), buf.clone())
                .expect("gradient buffer matches value shape"),
        )
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    /// Back-propagates from a single-element `loss` node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(NumericsError::Training("backward already ran on this graph".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NumericsError::dim(
                "backward",
                format!(
                    "loss must hold one element, got shape {:?}",
                    self.nodes[loss.0].value.shape()
                ),
            ));
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &upstream);
        }

        for (idx, grad) in self.grads.iter().enumerate() {
            if let Some(g) = grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NumericsError::NonFinite {
                        op: op_name(&self.nodes[idx].op),
                    });
                }
            }
        }
        Ok(())
    }

    /// Gradient buffer of `v`, allocated on first touch; `None` when `v`
    /// does not take part in differentiation.
    fn grad_slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f32>>], v: Var) -> Option<&'a mut Vec<f32>> {
        if !nodes[v.0].requires_grad {
            return None;
        }
        let len = nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backprop_node(&mut self, idx: usize, g: &[f32]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let out = &nodes[idx].value;
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => linalg::matmul_backward(nodes, grads, *a, *b, g),
            Op::Add { a, b } => {
                for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                    if let Some(d) = Self::grad_slot(nodes, grads, v) {
                        elementwise::axpy(d, g, sign);
                    }
                }
            }
            Op::Sub { a, b } => {
                for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if let Some(d) = Self::grad_slot(nodes, grads, v) {
                        elementwise::axpy(d, g, sign);
                    }
                }
            }
            Op::Mul { a, b } => elementwise::mul_backward(nodes, grads, *a, *b, g),
            Op::AddRowBias { x, bias } => elementwise::row_bias_backward(nodes, grads, *x, *bias, g),
            Op::AddChannelBias {
                x,
                bias,
                channels,
                plane,
            } => elementwise::channel_bias_backward(nodes, grads, *x, *bias, *channels, *plane, g),
            Op::Scale { x, factor } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    elementwise::axpy(d, g, *factor);
                }
            }
            Op::MulConst { x, mask } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    for ((d, g), m) in d.iter_mut().zip(g).zip(mask.data()) {
                        *d += g * m;
                    }
                }
            }
            Op::Sigmoid { x } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out.data()) {
                        *d += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh { x } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out.data()) {
                        *d += g * (1.0 - y * y);
                    }
                }
            }
            Op::Relu { x } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out.data()) {
                        if *y > 0.0 {
                            *d += g;
                        }
                    }
                }
            }
            Op::Narrow {
                x,
                outer,
                dim,
                inner,
                start,
                len,
            } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    let chunk = len * inner;
                    for o in 0..*outer {
                        let src = &g[o * chunk..(o + 1) * chunk];
                        let base = o * dim * inner + start * inner;
                        elementwise::axpy(&mut d[base..base + chunk], src, 1.0);
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    elementwise::axpy(d, g, 1.0);
                }
            }
            Op::Conv2d {
                x,
                w,
                geom,
                batch,
                out_channels,
            } => conv::conv2d_backward(nodes, grads, *x, *w, geom, *batch, *out_channels, g),
            Op::Upsample {
                x,
                factor,
                planes,
                height,
                width,
            } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    conv::upsample_backward(d, g, *factor, *planes, *height, *width);
                }
            }
            Op::Softmax { x, classes } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    loss::softmax_backward(d, g, out.data(), *classes);
                }
            }
            Op::CrossEntropy { probs, onehot } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *probs) {
                    loss::cross_entropy_backward(d, g[0], nodes[probs.0].value.data(), onehot);
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *logits) {
                    loss::softmax_cross_entropy_backward(d, g[0], probs, labels);
                }
            }
            Op::MeanSquaredError { a, b } => loss::mse_backward(nodes, grads, *a, *b, g[0]),
            Op::Sum { x } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean { x } => {
                if let Some(d) = Self::grad_slot(nodes, grads, *x) {
                    let scale = g[0] / d.len() as f32;
                    d.iter_mut().for_each(|d| *d += scale);
                }
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::Add { .. } => "add",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::AddRowBias { .. } => "add_row_bias",
        Op::AddChannelBias { .. } => "add_channel_bias",
        Op::Scale { .. } => "scale",
        Op::MulConst { .. } => "mul_const",
        Op::Sigmoid { .. } => "sigmoid",
        Op::Tanh { .. } => "tanh",
        Op::Relu { .. } => "relu",
        Op::Narrow { .. } => "narrow",
        Op::Reshape { .. } => "reshape",
        Op::Conv2d { .. } => "conv2d",
        Op::Upsample { .. } => "upsample",
        Op::Softmax { .. } => "softmax",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        Op::MeanSquaredError { .. } => "mse",
        Op::Sum { .. } => "sum",
        Op::Mean { .. } => "mean",
    }
}
