//! Frame similarity metrics.

use crate::error::{Result, TevError};
use crate::field::{DisplacementFrame, CHANNELS};

pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_same(a: &DisplacementFrame, b: &DisplacementFrame) -> Result<()> {
    if !a.same_dims(b) {
        return Err(TevError::Shape(format!(
            "{}x{} frame against {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Mean squared difference over every entry of both channels.
pub fn mse(a: &DisplacementFrame, b: &DisplacementFrame) -> Result<f64> {
    check_same(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(sum / a.as_slice().len() as f64)
}

/// Mean over frames of the per-frame [`mse`].
pub fn prediction_loss(predicted: &[DisplacementFrame], truth: &[DisplacementFrame]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(TevError::Shape(format!(
            "{} predicted frames against {} true frames",
            predicted.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        total += mse(p, t)?;
    }
    Ok(total / predicted.len() as f64)
}

/// Summed-area table with a zero border row and column.
struct Integral {
    stride: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(rows: usize, cols: usize, value: impl Fn(usize, usize) -> f64) -> Self {
        let stride = cols + 1;
        let mut data = vec![0.0; (rows + 1) * stride];
        for r in 0..rows {
            let mut row_sum = 0.0;
            for c in 0..cols {
                row_sum += value(r, c);
                data[(r + 1) * stride + c + 1] = data[r * stride + c + 1] + row_sum;
            }
        }
        Integral { stride, data }
    }

    fn window_sum(&self, r: usize, c: usize, size: usize) -> f64 {
        let s = self.stride;
        self.data[(r + size) * s + c + size] - self.data[r * s + c + size] - self.data[(r + size) * s + c]
            + self.data[r * s + c]
    }
}

/// Local SSIM term from window sums. Identical inputs give identical
/// numerator and denominator, hence exactly 1.
fn ssim_term(n: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64, c1: f64, c2: f64) -> f64 {
    let mx = sx / n;
    let my = sy / n;
    let vx = (sxx - sx * sx / n) / (n - 1.0);
    let vy = (syy - sy * sy / n) / (n - 1.0);
    let cxy = (sxy - sx * sy / n) / (n - 1.0);
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Structural similarity with a uniform 7×7 window over every valid window
/// position, averaged over positions and then over the two channels.
pub fn ssim(a: &DisplacementFrame, b: &DisplacementFrame, data_range: f64) -> Result<f64> {
    check_same(a, b)?;
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(TevError::Metric(format!(
            "data range must be positive, got {data_range}"
        )));
    }
    let (rows, cols) = (a.rows(), a.cols());
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(TevError::Metric(format!(
            "{rows}x{cols} frame is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    for ch in 0..CHANNELS {
        let x = a.channel(ch);
        let y = b.channel(ch);
        let at = |v: &[f32], r: usize, c: usize| v[r * cols + c] as f64;
        let ix = Integral::new(rows, cols, |r, c| at(x, r, c));
        let iy = Integral::new(rows, cols, |r, c| at(y, r, c));
        let ixx = Integral::new(rows, cols, |r, c| at(x, r, c) * at(x, r, c));
        let iyy = Integral::new(rows, cols, |r, c| at(y, r, c) * at(y, r, c));
        let ixy = Integral::new(rows, cols, |r, c| at(x, r, c) * at(y, r, c));
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..=rows - SSIM_WINDOW {
            for c in 0..=cols - SSIM_WINDOW {
                sum += ssim_term(
                    n,
                    ix.window_sum(r, c, SSIM_WINDOW),
                    iy.window_sum(r, c, SSIM_WINDOW),
                    ixx.window_sum(r, c, SSIM_WINDOW),
                    iyy.window_sum(r, c, SSIM_WINDOW),
                    ixy.window_sum(r, c, SSIM_WINDOW),
                    c1,
                    c2,
                );
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / CHANNELS as f64)
}
