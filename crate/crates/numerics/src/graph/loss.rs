use super::{Graph, Node, Op, Var};
use crate::error::{NumericsError, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f32 = 1e-12;

/// In-place softmax of one row, max-subtracted.
pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0.0f64;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v as f64;
    }
    let inv = (1.0 / total) as f32;
    row.iter_mut().for_each(|v| *v *= inv);
}

fn rows(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [c] => Ok((1, c)),
        [b, c] => Ok((b, c)),
        _ => Err(NumericsError::dim(
            op,
            format!("expected [C] or [B, C], got {:?}", t.shape()),
        )),
    }
}

fn validate_onehot(onehot: &Tensor, classes: usize) -> Result<()> {
    for (i, row) in onehot.data().chunks_exact(classes).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != classes - 1 {
            return Err(NumericsError::Label(format!(
                "row {i} is not a one-hot vector: {row:?}"
            )));
        }
    }
    Ok(())
}

impl Graph {
    /// Softmax over the last axis of a `[C]` or `[B, C]` tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (_, classes) = rows("softmax", self.value(x))?;
        let mut data = self.value(x).data().to_vec();
        data.chunks_exact_mut(classes).for_each(softmax_in_place);
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        self.push("softmax", value, Op::Softmax { x, classes }, &[x])
    }

    /// Mean over the batch of `-ln p_true`, with `p` clamped to
    /// [`PROB_FLOOR`].
    pub fn cross_entropy(&mut self, probs: Var, onehot: Tensor) -> Result<Var> {
        let pv = self.value(probs);
        let (batch, classes) = rows("cross_entropy", pv)?;
        if onehot.shape() != pv.shape() {
            return Err(NumericsError::shape("cross_entropy", pv.shape(), onehot.shape()));
        }
        validate_onehot(&onehot, classes)?;
        let total: f64 = pv
            .data()
            .iter()
            .zip(onehot.data())
            .filter(|(_, &y)| y == 1.0)
            .map(|(&p, _)| -(p.max(PROB_FLOOR) as f64).ln())
            .sum();
        let value = Tensor::scalar((total / batch as f64) as f32);
        self.push("cross_entropy", value, Op::CrossEntropy { probs, onehot }, &[probs])
    }

    /// Fused softmax + cross entropy on raw logits `[B, C]` with integer
    /// labels. Numerically preferable to the two-step form for training.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (batch, classes) = rows("softmax_cross_entropy", lv)?;
        if labels.len() != batch {
            return Err(NumericsError::Label(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(NumericsError::Label(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let mut probs = lv.data().to_vec();
        probs.chunks_exact_mut(classes).for_each(softmax_in_place);
        let total: f64 = probs
            .chunks_exact(classes)
            .zip(labels)
            .map(|(row, &l)| -(row[l].max(PROB_FLOOR) as f64).ln())
            .sum();
        let probs = Tensor::new(lv.shape().to_vec(), probs)?;
        let value = Tensor::scalar((total / batch as f64) as f32);
        self.push(
            "softmax_cross_entropy",
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// `mean((a - b)²)` over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NumericsError::shape("mse", va.shape(), vb.shape()));
        }
        if va.is_empty() {
            return Err(NumericsError::dim("mse", "empty operands"));
        }
        let total: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| {
                let d = (x - y) as f64;
                d * d
            })
            .sum();
        let value = Tensor::scalar((total / va.len() as f64) as f32);
        self.push("mse", value, Op::MeanSquaredError { a, b }, &[a, b])
    }
}

pub(super) fn softmax_backward(dx: &mut [f32], g: &[f32], y: &[f32], classes: usize) {
    for ((dx, g), y) in dx
        .chunks_exact_mut(classes)
        .zip(g.chunks_exact(classes))
        .zip(y.chunks_exact(classes))
    {
        let dot: f32 = g.iter().zip(y).map(|(g, y)| g * y).sum();
        for ((d, g), y) in dx.iter_mut().zip(g).zip(y) {
            *d += y * (g - dot);
        }
    }
}

pub(super) fn cross_entropy_backward(dp: &mut [f32], g: f32, probs: &[f32], onehot: &Tensor) {
    let batch = match *onehot.shape() {
        [_] => 1,
        [b, _] => b,
        _ => unreachable!("validated in forward"),
    };
    let scale = g / batch as f32;
    for ((d, &p), &y) in dp.iter_mut().zip(probs).zip(onehot.data()) {
        if y == 1.0 && p >= PROB_FLOOR {
            *d -= scale / p;
        }
    }
}

pub(super) fn softmax_cross_entropy_backward(dl: &mut [f32], g: f32, probs: &Tensor, labels: &[usize]) {
    let classes = probs.len() / labels.len();
    let scale = g / labels.len() as f32;
    for ((d, p), &l) in dl
        .chunks_exact_mut(classes)
        .zip(probs.data().chunks_exact(classes))
        .zip(labels)
    {
        for (j, (d, &p)) in d.iter_mut().zip(p).enumerate() {
            let target = if j == l { 1.0 } else { 0.0 };
            *d += scale * (p - target);
        }
    }
}

pub(super) fn mse_backward(nodes: &[Node], grads: &mut [Option<Vec<f32>>], a: Var, b: Var, g: f32) {
    let av = nodes[a.0].value.data();
    let bv = nodes[b.0].value.data();
    let scale = 2.0 * g / av.len() as f32;
    if let Some(da) = Graph::grad_slot(nodes, grads, a) {
        for ((d, x), y) in da.iter_mut().zip(av).zip(bv) {
            *d += scale * (x - y);
        }
    }
    if let Some(db) = Graph::grad_slot(nodes, grads, b) {
        for ((d, x), y) in db.iter_mut().zip(av).zip(bv) {
            *d -= scale * (x - y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_of(v: &[f32]) -> Vec<f32> {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(v));
        let y = g.softmax(x).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn uniform_softmax() {
        let p = probs_of(&[0.0; 7]);
        for v in p {
            assert!((v - 1.0 / 7.0).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_large_logits() {
        let p = probs_of(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-7);
        assert!(p[1] >= 0.0 && p[1] < 1e-30);
    }

    #[test]
    fn softmax_reference_values() {
        // e^x / Σe^x evaluated in f64 by hand: [0.09003057, 0.24472847, 0.66524096]
        let p = probs_of(&[1.0, 2.0, 3.0]);
        for (got, want) in p.iter().zip([0.090_030_57, 0.244_728_47, 0.665_240_96]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    fn ce(probs: Vec<f32>, onehot: Vec<f32>, batch: usize, classes: usize) -> Result<f32> {
        let mut g = Graph::new();
        let p = g.constant(Tensor::new([batch, classes], probs).unwrap());
        let l = g.cross_entropy(p, Tensor::new([batch, classes], onehot).unwrap())?;
        Ok(g.value(l).item().unwrap())
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(ce(vec![0.0, 1.0], vec![0.0, 1.0], 1, 2).unwrap(), 0.0);
        let uniform = ce(
            vec![1.0 / 7.0; 7],
            {
                let mut y = vec![0.0; 7];
                y[3] = 1.0;
                y
            },
            1,
            7,
        )
        .unwrap();
        assert!((uniform - 7f32.ln()).abs() < 1e-6);
        // (ln 2 + ln 4) / 2
        let pair = ce(vec![0.5, 0.5, 0.25, 0.75], vec![1.0, 0.0, 1.0, 0.0], 2, 2).unwrap();
        assert!((pair - 1.039_720_8).abs() < 1e-6, "{pair}");
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let v = ce(vec![1.0, 0.0], vec![0.0, 1.0], 1, 2).unwrap();
        assert!((v - (-(1e-12f64).ln()) as f32).abs() < 1e-3);
    }

    #[test]
    fn cross_entropy_rejects_bad_onehot() {
        assert!(matches!(
            ce(vec![0.5, 0.5], vec![1.0, 1.0], 1, 2),
            Err(NumericsError::Label(_))
        ));
        assert!(matches!(
            ce(vec![0.5, 0.5], vec![0.0, 0.0], 1, 2),
            Err(NumericsError::Label(_))
        ));
    }

    #[test]
    fn fused_matches_two_step() {
        let logits = vec![0.3, -1.2, 2.0, 0.1, 0.0, 0.7];
        let mut g = Graph::new();
        let x = g.constant(Tensor::new([2, 3], logits.clone()).unwrap());
        let fused = g.softmax_cross_entropy(x, &[2, 1]).unwrap();
        let p = g.softmax(x).unwrap();
        let two = g
            .cross_entropy(p, Tensor::new([2, 3], vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap())
            .unwrap();
        let (a, b) = (g.value(fused).item().unwrap(), g.value(two).item().unwrap());
        assert!((a - b).abs() < 1e-6);
    }
}
