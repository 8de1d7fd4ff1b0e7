//! Raw slice kernels shared by the graph operations.

use serde::{Deserialize, Serialize};

use crate::error::{NumericsError, Result};

/// `c (+)= op(a) · op(b)` for row-major buffers, where `op(a)` is `m × k`
/// and `op(b)` is `k × n`. A transposed operand is stored in the
/// transposed layout (`k × m` / `n × k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_transposed: bool,
    b: &[f32],
    b_transposed: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs buffer length");
    assert_eq!(b.len(), k * n, "gemm: rhs buffer length");
    assert_eq!(c.len(), m * n, "gemm: output buffer length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access stays within
    // the three slices, and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding of `k / 2` on every side; preserves spatial size at stride 1.
    Same,
    Valid,
}

/// Resolved geometry of a 2-D convolution over one `C × H × W` sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(NumericsError::dim("conv2d", "stride must be at least 1"));
        }
        if kernel == 0 {
            return Err(NumericsError::dim("conv2d", "kernel size must be at least 1"));
        }
        let pad = match padding {
            Padding::Same => {
                if kernel % 2 == 0 {
                    return Err(NumericsError::dim(
                        "conv2d",
                        format!("same padding needs an odd kernel, got {kernel}"),
                    ));
                }
                kernel / 2
            }
            Padding::Valid => 0,
        };
        let padded_h = height + 2 * pad;
        let padded_w = width + 2 * pad;
        if kernel > padded_h || kernel > padded_w {
            return Err(NumericsError::dim(
                "conv2d",
                format!("kernel {kernel}x{kernel} larger than padded input {padded_h}x{padded_w}"),
            ));
        }
        Ok(ConvGeometry {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_height: (padded_h - kernel) / stride + 1,
            out_width: (padded_w - kernel) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_positions(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Unfolds one sample into a `(C·k·k) × (Ho·Wo)` patch matrix.
pub(crate) fn im2col(x: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let positions = g.out_positions();
    debug_assert_eq!(x.len(), g.input_len());
    debug_assert_eq!(cols.len(), g.patch_len() * positions);
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                    if iy < 0 || iy >= g.height as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back, accumulating into `dx`.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeometry, dx: &mut [f32]) {
    let positions = g.out_positions();
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_width {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_width + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);

        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c2 = [1.0; 4];
        gemm(2, 3, 2, &at, true, &bt, true, &mut c2, true);
        assert_eq!(c2, [5.0, 6.0, 11.0, 12.0]);
    }

    #[test]
    fn same_padding_geometry() {
        for k in [1, 3, 5, 7] {
            let g = ConvGeometry::new(2, 9, 11, k, 1, Padding::Same).unwrap();
            assert_eq!((g.out_height, g.out_width), (9, 11));
        }
        let g = ConvGeometry::new(2, 30, 30, 3, 2, Padding::Same).unwrap();
        assert_eq!((g.out_height, g.out_width), (15, 15));
        let g = ConvGeometry::new(2, 15, 15, 3, 2, Padding::Same).unwrap();
        assert_eq!((g.out_height, g.out_width), (8, 8));
    }

    #[test]
    fn geometry_errors() {
        assert!(ConvGeometry::new(1, 4, 4, 2, 1, Padding::Same).is_err());
        assert!(ConvGeometry::new(1, 4, 4, 5, 1, Padding::Valid).is_err());
        assert!(ConvGeometry::new(1, 4, 4, 3, 0, Padding::Valid).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for arbitrary x, y.
        let g = ConvGeometry::new(2, 5, 4, 3, 2, Padding::Same).unwrap();
        let x: Vec<f32> = (0..g.input_len()).map(|i| (i as f32 * 0.37).sin()).collect();
        let y: Vec<f32> = (0..g.patch_len() * g.out_positions())
            .map(|i| (i as f32 * 0.11).cos())
            .collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
    }
}
