use super::{Graph, Node, Op, Var};
use crate::error::{NumericsError, Result};
use crate::kernels::{col2im, gemm, im2col, ConvGeometry, Padding};
use crate::tensor::Tensor;

/// Splits a `[C, H, W]` or `[N, C, H, W]` shape into `(N, C, H, W)`.
fn batch_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(NumericsError::dim(
            op,
            format!("expected [C, H, W] or [N, C, H, W], got {shape:?}"),
        )),
    }
}

impl Graph {
    /// Cross-correlation of `x` (`[C_in, H, W]` or `[N, C_in, H, W]`) with
    /// `kernels` (`[C_out, C_in, k, k]`). The output keeps the batch rank of
    /// the input.
    pub fn conv2d(&mut self, x: Var, kernels: Var, stride: usize, padding: Padding) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(kernels).to_vec();
        let (batch, c_in, h, w) = batch_dims("conv2d", &xs)?;
        if ws.len() != 4 || ws[1] != c_in || ws[2] != ws[3] {
            return Err(NumericsError::shape("conv2d", &xs, &ws));
        }
        let c_out = ws[0];
        let geom = ConvGeometry::new(c_in, h, w, ws[2], stride, padding)?;
        let positions = geom.out_positions();
        let patch = geom.patch_len();

        let xv = self.value(x).data();
        let wv = self.value(kernels).data();
        let mut out = vec![0.0; batch * c_out * positions];
        let mut cols = vec![0.0; patch * positions];
        for n in 0..batch {
            im2col(&xv[n * geom.input_len()..(n + 1) * geom.input_len()], &geom, &mut cols);
            let dst = &mut out[n * c_out * positions..(n + 1) * c_out * positions];
            gemm(c_out, patch, positions, wv, false, &cols, false, dst, false);
        }
        let out_shape = if xs.len() == 3 {
            vec![c_out, geom.out_height, geom.out_width]
        } else {
            vec![batch, c_out, geom.out_height, geom.out_width]
        };
        let value = Tensor::new(out_shape, out)?;
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                x,
                w: kernels,
                geom,
                batch,
                out_channels: c_out,
            },
            &[x, kernels],
        )
    }

    /// Nearest-neighbour upsampling of the two trailing (spatial) axes.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if factor == 0 || xs.len() < 2 {
            return Err(NumericsError::dim(
                "upsample",
                format!("cannot upsample {xs:?} by {factor}"),
            ));
        }
        let rank = xs.len();
        let (height, width) = (xs[rank - 2], xs[rank - 1]);
        let planes: usize = xs[..rank - 2].iter().product();
        let (oh, ow) = (height * factor, width * factor);
        let src = self.value(x).data();
        let mut out = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            let plane = &src[p * height * width..(p + 1) * height * width];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for oy in 0..oh {
                let row = &plane[(oy / factor) * width..(oy / factor + 1) * width];
                for (ox, v) in dst[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                    *v = row[ox / factor];
                }
            }
        }
        let mut out_shape = xs;
        out_shape[rank - 2] = oh;
        out_shape[rank - 1] = ow;
        let value = Tensor::new(out_shape, out)?;
        self.push(
            "upsample",
            value,
            Op::Upsample {
                x,
                factor,
                planes,
                height,
                width,
            },
            &[x],
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv2d_backward(
    nodes: &[Node],
    grads: &mut [Option<Vec<f32>>],
    x: Var,
    w: Var,
    geom: &ConvGeometry,
    batch: usize,
    c_out: usize,
    g: &[f32],
) {
    let positions = geom.out_positions();
    let patch = geom.patch_len();
    let in_len = geom.input_len();
    let out_len = c_out * positions;
    let xv = nodes[x.0].value.data();
    let wv = nodes[w.0].value.data();
    let mut cols = vec![0.0; patch * positions];

    if let Some(dw) = Graph::grad_slot(nodes, grads, w) {
        for n in 0..batch {
            im2col(&xv[n * in_len..(n + 1) * in_len], geom, &mut cols);
            // dW += G_n · colsᵀ
            gemm(
                c_out,
                positions,
                patch,
                &g[n * out_len..(n + 1) * out_len],
                false,
                &cols,
                true,
                dw,
                true,
            );
        }
    }
    if let Some(dx) = Graph::grad_slot(nodes, grads, x) {
        for n in 0..batch {
            // dcols = Wᵀ · G_n
            gemm(
                patch,
                c_out,
                positions,
                wv,
                true,
                &g[n * out_len..(n + 1) * out_len],
                false,
                &mut cols,
                false,
            );
            col2im(&cols, geom, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
}

pub(super) fn upsample_backward(dx: &mut [f32], g: &[f32], factor: usize, planes: usize, height: usize, width: usize) {
    let (oh, ow) = (height * factor, width * factor);
    for p in 0..planes {
        let src = &g[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * height * width..(p + 1) * height * width];
        for oy in 0..oh {
            let row = &mut dst[(oy / factor) * width..(oy / factor + 1) * width];
            for ox in 0..ow {
                row[ox / factor] += src[oy * ow + ox];
            }
        }
    }
}
