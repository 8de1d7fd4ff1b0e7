use rand::Rng;

use super::{Graph, Mode, Node, Op, Var};
use crate::error::{NumericsError, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub(super) fn axpy(dst: &mut [f32], src: &[f32], alpha: f32) {
    if alpha == 1.0 {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    } else {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
    }
}

fn stable_sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: Op) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NumericsError::shape(name, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Result<Var> {
        let value = self.value(x).map(f);
        self.push(name, value, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// `x[m × n] + bias[n]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let n = vb.len();
        if vb.rank() != 1 || vx.rank() != 2 || vx.shape()[1] != n {
            return Err(NumericsError::shape("add_row_bias", vx.shape(), vb.shape()));
        }
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            axpy(row, vb.data(), 1.0);
        }
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push("add_row_bias", value, Op::AddRowBias { x, bias }, &[x, bias])
    }

    /// `x[.., C, H, W] + bias[C]` broadcast over every spatial position.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let rank = vx.rank();
        if vb.rank() != 1 || rank < 3 || vx.shape()[rank - 3] != vb.len() {
            return Err(NumericsError::shape("add_channel_bias", vx.shape(), vb.shape()));
        }
        let channels = vb.len();
        let plane = vx.shape()[rank - 2] * vx.shape()[rank - 1];
        let mut data = vx.data().to_vec();
        for (i, chunk) in data.chunks_exact_mut(plane).enumerate() {
            let b = vb.data()[i % channels];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push(
            "add_channel_bias",
            value,
            Op::AddChannelBias {
                x,
                bias,
                channels,
                plane,
            },
            &[x, bias],
        )
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Result<Var> {
        self.unary("scale", x, |v| v * factor, Op::Scale { x, factor })
    }

    /// Multiplies by a fixed tensor that receives no gradient.
    pub fn mul_const(&mut self, x: Var, mask: Tensor) -> Result<Var> {
        let vx = self.value(x);
        if vx.shape() != mask.shape() {
            return Err(NumericsError::shape("mul_const", vx.shape(), mask.shape()));
        }
        let data = vx.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push("mul_const", value, Op::MulConst { x, mask }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, stable_sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f32::tanh, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu { x })
    }

    /// Inverted dropout: in [`Mode::Train`] each entry is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`. Inference
    /// (and `p == 0`) returns `x` itself.
    pub fn dropout(&mut self, x: Var, p: f32, mode: Mode, rng: &mut SeededRng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::dim(
                "dropout",
                format!("probability must lie in [0, 1), got {p}"),
            ));
        }
        if mode == Mode::Infer || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.shape(x).to_vec();
        let numel: usize = shape.iter().product();
        let mask = (0..numel)
            .map(|_| if rng.gen::<f32>() < p { 0.0 } else { keep })
            .collect();
        self.mul_const(x, Tensor::new(shape, mask)?)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(NumericsError::dim(
                "narrow",
                format!("cannot take [{start}, {}) of axis {axis} in {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        self.push(
            "narrow",
            value,
            Op::Narrow {
                x,
                outer,
                dim,
                inner,
                start,
                len,
            },
            &[x],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        self.push("reshape", value, Op::Reshape { x }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push("sum", Tensor::scalar(total as f32), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.is_empty() {
            return Err(NumericsError::dim("mean", "mean of an empty tensor"));
        }
        let total: f64 = vx.data().iter().map(|&v| v as f64).sum();
        let value = Tensor::scalar((total / vx.len() as f64) as f32);
        self.push("mean", value, Op::Mean { x }, &[x])
    }
}

pub(super) fn mul_backward(nodes: &[Node], grads: &mut [Option<Vec<f32>>], a: Var, b: Var, g: &[f32]) {
    let av = nodes[a.0].value.data();
    let bv = nodes[b.0].value.data();
    if let Some(da) = Graph::grad_slot(nodes, grads, a) {
        for ((d, g), y) in da.iter_mut().zip(g).zip(bv) {
            *d += g * y;
        }
    }
    if let Some(db) = Graph::grad_slot(nodes, grads, b) {
        for ((d, g), x) in db.iter_mut().zip(g).zip(av) {
            *d += g * x;
        }
    }
}

pub(super) fn row_bias_backward(nodes: &[Node], grads: &mut [Option<Vec<f32>>], x: Var, bias: Var, g: &[f32]) {
    if let Some(dx) = Graph::grad_slot(nodes, grads, x) {
        axpy(dx, g, 1.0);
    }
    if let Some(db) = Graph::grad_slot(nodes, grads, bias) {
        let n = db.len();
        for row in g.chunks_exact(n) {
            axpy(db, row, 1.0);
        }
    }
}

pub(super) fn channel_bias_backward(
    nodes: &[Node],
    grads: &mut [Option<Vec<f32>>],
    x: Var,
    bias: Var,
    channels: usize,
    plane: usize,
    g: &[f32],
) {
    if let Some(dx) = Graph::grad_slot(nodes, grads, x) {
        axpy(dx, g, 1.0);
    }
    if let Some(db) = Graph::grad_slot(nodes, grads, bias) {
        for (i, chunk) in g.chunks_exact(plane).enumerate() {
            db[i % channels] += chunk.iter().sum::<f32>();
        }
    }
}
