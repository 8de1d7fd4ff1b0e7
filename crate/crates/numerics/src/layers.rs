//! Parameterised layers built from graph primitives.
//!
//! A layer only describes shapes and parameter names; its tensors live in a
//! [`ParamSet`] and are looked up through [`Bindings`] at forward time, so a
//! single parameter set can be bound to many graphs.

use serde::{Deserialize, Serialize};

use crate::error::{NumericsError, Result};
use crate::graph::{Graph, Var};
use crate::kernels::Padding;
use crate::params::{Bindings, ParamSet};
use crate::rng::{xavier_uniform, SeededRng};
use crate::tensor::Tensor;

/// Fully connected layer, `y = x · W + b` with `W: [in × out]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Linear {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut SeededRng) {
        params.insert(
            self.weight_name(),
            xavier_uniform([self.input, self.output], self.input, self.output, rng),
        );
        params.insert(self.bias_name(), Tensor::zeros([self.output]));
    }

    /// `x: [B × in] -> [B × out]`
    pub fn forward(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.get(&self.weight_name())?)?;
        g.add_row_bias(y, p.get(&self.bias_name())?)
    }
}

/// 2-D convolution with per-channel bias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    pub fn same(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Conv2d {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: Padding::Same,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut SeededRng) {
        let k2 = self.kernel * self.kernel;
        params.insert(
            self.weight_name(),
            xavier_uniform(
                [self.out_channels, self.in_channels, self.kernel, self.kernel],
                self.in_channels * k2,
                self.out_channels * k2,
                rng,
            ),
        );
        params.insert(self.bias_name(), Tensor::zeros([self.out_channels]));
    }

    pub fn forward(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var> {
        let y = g.conv2d(x, p.get(&self.weight_name())?, self.stride, self.padding)?;
        g.add_channel_bias(y, p.get(&self.bias_name())?)
    }

    /// Spatial output size for an `h × w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let geom = crate::kernels::ConvGeometry::new(self.in_channels, h, w, self.kernel, self.stride, self.padding)?;
        Ok((geom.out_height, geom.out_width))
    }
}

/// Recurrent state `(h, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

/// Gate pre-activations laid out `[input | forget | candidate | output]`
/// along `axis`; returns the new state.
fn gated_update(g: &mut Graph, gates: Var, axis: usize, hidden: usize, c: Var) -> Result<CellState> {
    let i = g.narrow(gates, axis, 0, hidden)?;
    let f = g.narrow(gates, axis, hidden, hidden)?;
    let cand = g.narrow(gates, axis, 2 * hidden, hidden)?;
    let o = g.narrow(gates, axis, 3 * hidden, hidden)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(cand)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.mul(o, squashed)?;
    Ok(CellState { h: h_next, c: c_next })
}

/// Standard LSTM cell with gate order (input, forget, candidate, output).
///
/// Parameters: `w_x: [in × 4h]`, `w_h: [h × 4h]`, `b: [4h]`. The forget
/// slice of the bias starts at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        LstmCell {
            name: name.into(),
            input,
            hidden,
        }
    }

    pub fn input_weight_name(&self) -> String {
        format!("{}.w_x", self.name)
    }

    pub fn hidden_weight_name(&self) -> String {
        format!("{}.w_h", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut SeededRng) {
        let gates = 4 * self.hidden;
        params.insert(
            self.input_weight_name(),
            xavier_uniform([self.input, gates], self.input, gates, rng),
        );
        params.insert(
            self.hidden_weight_name(),
            xavier_uniform([self.hidden, gates], self.hidden, gates, rng),
        );
        let mut bias = vec![0.0; gates];
        bias[self.hidden..2 * self.hidden].fill(1.0);
        params.insert(self.bias_name(), Tensor::new([gates], bias).expect("bias length"));
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> CellState {
        CellState {
            h: g.constant(Tensor::zeros([batch, self.hidden])),
            c: g.constant(Tensor::zeros([batch, self.hidden])),
        }
    }

    /// `x · W_x` for any number of rows; lets a caller project every time
    /// step with one product.
    pub fn project_input(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var> {
        g.matmul(x, p.get(&self.input_weight_name())?)
    }

    /// One step from an already projected input `[B × 4h]`.
    pub fn step_projected(&self, g: &mut Graph, p: &Bindings, x_proj: Var, state: CellState) -> Result<CellState> {
        let hs = g.shape(state.h).to_vec();
        if hs.len() != 2 || hs[1] != self.hidden || g.shape(state.c) != hs.as_slice() {
            return Err(NumericsError::shape("lstm_cell", &hs, g.shape(state.c)));
        }
        let rec = g.matmul(state.h, p.get(&self.hidden_weight_name())?)?;
        let gates = g.add(x_proj, rec)?;
        let gates = g.add_row_bias(gates, p.get(&self.bias_name())?)?;
        gated_update(g, gates, 1, self.hidden, state.c)
    }

    /// `x: [B × in]`, state `[B × h]`.
    pub fn step(&self, g: &mut Graph, p: &Bindings, x: Var, state: CellState) -> Result<CellState> {
        let x_proj = self.project_input(g, p, x)?;
        self.step_projected(g, p, x_proj, state)
    }
}

/// Convolutional LSTM cell: the LSTM gate equations with the matrix
/// products replaced by same-padded convolutions.
///
/// Parameters: `w_x: [4C_h × C_in × k × k]`, `w_h: [4C_h × C_h × k × k]`,
/// `b: [4C_h]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLstmCell {
    pub name: String,
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
}

impl ConvLstmCell {
    pub fn new(name: impl Into<String>, in_channels: usize, hidden_channels: usize, kernel: usize) -> Self {
        ConvLstmCell {
            name: name.into(),
            in_channels,
            hidden_channels,
            kernel,
        }
    }

    pub fn input_weight_name(&self) -> String {
        format!("{}.w_x", self.name)
    }

    pub fn hidden_weight_name(&self) -> String {
        format!("{}.w_h", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut SeededRng) {
        let gates = 4 * self.hidden_channels;
        let k2 = self.kernel * self.kernel;
        params.insert(
            self.input_weight_name(),
            xavier_uniform(
                [gates, self.in_channels, self.kernel, self.kernel],
                self.in_channels * k2,
                gates * k2,
                rng,
            ),
        );
        params.insert(
            self.hidden_weight_name(),
            xavier_uniform(
                [gates, self.hidden_channels, self.kernel, self.kernel],
                self.hidden_channels * k2,
                gates * k2,
                rng,
            ),
        );
        let mut bias = vec![0.0; gates];
        bias[self.hidden_channels..2 * self.hidden_channels].fill(1.0);
        params.insert(self.bias_name(), Tensor::new([gates], bias).expect("bias length"));
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize, height: usize, width: usize) -> CellState {
        let shape = [batch, self.hidden_channels, height, width];
        CellState {
            h: g.constant(Tensor::zeros(shape)),
            c: g.constant(Tensor::zeros(shape)),
        }
    }

    pub fn project_input(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var> {
        g.conv2d(x, p.get(&self.input_weight_name())?, 1, Padding::Same)
    }

    /// One step from a projected input `[B, 4C_h, H, W]`.
    pub fn step_projected(&self, g: &mut Graph, p: &Bindings, x_proj: Var, state: CellState) -> Result<CellState> {
        let xs = g.shape(x_proj).to_vec();
        let hs = g.shape(state.h).to_vec();
        let spatial_ok = xs.len() == 4
            && hs.len() == 4
            && xs[0] == hs[0]
            && xs[2..] == hs[2..]
            && hs[1] == self.hidden_channels
            && g.shape(state.c) == hs.as_slice();
        if !spatial_ok {
            return Err(NumericsError::dim(
                "convlstm_cell",
                format!("input {xs:?} incompatible with state {hs:?}"),
            ));
        }
        let rec = g.conv2d(state.h, p.get(&self.hidden_weight_name())?, 1, Padding::Same)?;
        let gates = g.add(x_proj, rec)?;
        let gates = g.add_channel_bias(gates, p.get(&self.bias_name())?)?;
        gated_update(g, gates, 1, self.hidden_channels, state.c)
    }

    /// `x: [B, C_in, H, W]`, state `[B, C_h, H, W]`.
    pub fn step(&self, g: &mut Graph, p: &Bindings, x: Var, state: CellState) -> Result<CellState> {
        let xs = g.shape(x).to_vec();
        let hs = g.shape(state.h).to_vec();
        if xs.len() != 4 || hs.len() != 4 || xs[2..] != hs[2..] || xs[0] != hs[0] {
            return Err(NumericsError::dim(
                "convlstm_cell",
                format!("input {xs:?} incompatible with state {hs:?}"),
            ));
        }
        let x_proj = self.project_input(g, p, x)?;
        self.step_projected(g, p, x_proj, state)
    }
}
