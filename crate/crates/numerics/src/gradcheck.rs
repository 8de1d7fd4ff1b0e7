//! Finite-difference verification of analytic gradients.
//!
//! The graph under test may produce an output of any shape. It is reduced to
//! a scalar by a fixed random projection `Σ r_i y_i` (accumulated in f64),
//! which exercises every output element with a distinct weight.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const STEP: f32 = 1e-3;

/// Gradients smaller than this are compared in absolute terms. Central
/// differences over a 32-bit forward pass with `h = 1e-3` carry up to a few
/// `1e-4` of rounding noise once a perturbed input feeds dozens of outputs,
/// so a smaller floor would measure float noise rather than the backward
/// pass.
pub const MAGNITUDE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error per input, in input order.
    pub per_input: Vec<f64>,
    pub worst_index: Option<(usize, usize)>,
    pub checked: usize,
    /// Elements left out because a kink lies inside the perturbation.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }

    pub fn skipped_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / scale
}

fn projected(
    inputs: &[Tensor],
    build: &impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    projection: &mut Option<Vec<f32>>,
    seed: u64,
    with_grad: bool,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let n = g.value(out).len();
    let r = projection.get_or_insert_with(|| {
        let mut rng = seeded(seed ^ 0x5EED);
        (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    });
    let value: f64 = g
        .value(out)
        .data()
        .iter()
        .zip(r.iter())
        .map(|(&y, &w)| y as f64 * w as f64)
        .sum();
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    let shape = g.shape(out).to_vec();
    let weights = g.constant(Tensor::new(shape, r.clone())?);
    let weighted = g.mul(out, weights)?;
    let loss = g.sum(weighted)?;
    g.backward(loss)?;
    Ok((value, vars.iter().map(|&v| g.grad(v)).collect()))
}

/// Compares the backward pass of `build` against central differences for
/// every element of every input.
pub fn check_gradients(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    seed: u64,
) -> Result<GradCheckReport> {
    check_gradients_with_step(inputs, build, seed, STEP)
}

pub fn check_gradients_with_step(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    seed: u64,
    step: f32,
) -> Result<GradCheckReport> {
    run_check(inputs, &build, seed, step, None)
}

/// Central differences at `step` and `step / 2` that disagree by more than
/// this (relative, with the usual floor) straddle a kink.
pub const KINK_TOLERANCE: f64 = 1e-3;

/// Like [`check_gradients`], for functions with kinks such as ReLU. Where
/// the central difference changes by more than [`KINK_TOLERANCE`] when the
/// step is halved, the function is not smooth over the perturbation and
/// there is no finite-difference reference; the element is counted in
/// `skipped` instead of compared. The test never looks at the analytic
/// gradient, so it cannot hide a wrong one. A kink exactly at the
/// evaluation point is symmetric under halving and goes undetected, so
/// evaluate at random points rather than at zero-initialised ones.
pub fn check_gradients_piecewise(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    seed: u64,
) -> Result<GradCheckReport> {
    run_check(inputs, &build, seed, STEP, Some(KINK_TOLERANCE))
}

fn central_difference(
    perturbed: &mut [Tensor],
    k: usize,
    i: usize,
    step: f32,
    build: &impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    projection: &mut Option<Vec<f32>>,
    seed: u64,
) -> Result<f64> {
    let x = perturbed[k].data()[i];
    let plus = x + step;
    let minus = x - step;
    perturbed[k].data_mut()[i] = plus;
    let (f_plus, _) = projected(perturbed, build, projection, seed, false)?;
    perturbed[k].data_mut()[i] = minus;
    let (f_minus, _) = projected(perturbed, build, projection, seed, false)?;
    perturbed[k].data_mut()[i] = x;
    Ok((f_plus - f_minus) / (plus as f64 - minus as f64))
}

fn run_check(
    inputs: &[Tensor],
    build: &impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    seed: u64,
    step: f32,
    kink_tolerance: Option<f64>,
) -> Result<GradCheckReport> {
    let mut projection = None;
    let (_, analytic) = projected(inputs, build, &mut projection, seed, true)?;
    let mut per_input = vec![0.0f64; inputs.len()];
    let mut worst = None;
    let mut worst_err = -1.0;
    let mut checked = 0;
    let mut skipped = 0;
    let mut perturbed = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let numeric = central_difference(&mut perturbed, k, i, step, build, &mut projection, seed)?;
            if let Some(tol) = kink_tolerance {
                let half = central_difference(&mut perturbed, k, i, step / 2.0, build, &mut projection, seed)?;
                if relative_error(numeric, half) > tol {
                    skipped += 1;
                    continue;
                }
            }
            let a = analytic[k].as_ref().map_or(0.0, |t| t.data()[i] as f64);
            let err = relative_error(a, numeric);
            per_input[k] = per_input[k].max(err);
            if err > worst_err {
                worst_err = err;
                worst = Some((k, i));
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        per_input,
        worst_index: worst,
        checked,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        // tanh is correct; scaling the input by a constant outside the graph
        // makes the numeric derivative disagree with the recorded one.
        let x = Tensor::vector(&[0.3, -0.2, 0.9]);
        let report = check_gradients(&[x], |g, v| g.tanh(v[0]), 1).unwrap();
        assert!(report.max_rel_error() < 1e-3);

        let x = Tensor::vector(&[0.3, -0.2, 0.9]);
        let bad = check_gradients(
            &[x],
            |g, v| {
                let doubled = g.value(v[0]).map(|t| 2.0 * t);
                let c = g.constant(doubled);
                let y = g.tanh(c)?;
                g.add(y, v[0])
            },
            1,
        )
        .unwrap();
        assert!(bad.max_rel_error() > 1e-2);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((relative_error(0.0, 1e-4) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn kinks_are_skipped_not_compared() {
        let x = Tensor::new(vec![4], vec![-2e-4, 0.5, -0.7, 1e-4]).unwrap();
        let plain = check_gradients(std::slice::from_ref(&x), |g, v| g.relu(v[0]), 2).unwrap();
        assert!(plain.max_rel_error() > 1e-2);
        let r = check_gradients_piecewise(&[x], |g, v| g.relu(v[0]), 2).unwrap();
        assert_eq!(r.skipped, 2);
        assert_eq!(r.checked, 2);
        assert!(r.max_rel_error() < 1e-4);
        assert!((r.skipped_fraction() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn piecewise_check_still_catches_a_wrong_backward() {
        let x = Tensor::new(vec![3], vec![0.4, -0.3, 0.8]).unwrap();
        let r = check_gradients_piecewise(
            &[x],
            |g, v| {
                let doubled = g.value(v[0]).map(|t| 2.0 * t);
                let c = g.constant(doubled);
                let y = g.relu(c)?;
                g.add(y, v[0])
            },
            1,
        )
        .unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_rel_error() > 0.5);
    }
}
