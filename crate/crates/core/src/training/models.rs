use tev_numerics::{Bindings, Graph, Mode, SeededRng, Tensor, Var};

use super::Trainable;
use crate::error::{Result, TevError};
use crate::eventnet::EventClassifier;
use crate::field::{DisplacementFrame, TactileSequence, CHANNELS};
use crate::pixelmotion::PixelMotionNet;

/// Cross-entropy of the classifier on each sequence's first window.
impl Trainable for EventClassifier {
    type Sample = TactileSequence;

    fn batch_loss(
        &self,
        g: &mut Graph,
        p: &Bindings,
        batch: &[&TactileSequence],
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        let mut windows = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for seq in batch {
            windows.push(self.window(seq)?);
            labels.push(
                seq.label
                    .ok_or_else(|| TevError::Config("cannot train on an unlabelled sequence".into()))?
                    .index(),
            );
        }
        let logits = self.logits(g, p, &windows, mode, rng)?;
        Ok(g.softmax_cross_entropy(logits, &labels)?)
    }
}

/// Mean squared rollout error over the predicted frames, observing the
/// first `n_in` frames and predicting the next `n_p`.
impl Trainable for PixelMotionNet {
    type Sample = TactileSequence;

    fn batch_loss(
        &self,
        g: &mut Graph,
        p: &Bindings,
        batch: &[&TactileSequence],
        _mode: Mode,
        _rng: &mut SeededRng,
    ) -> Result<Var> {
        let (n_in, n_p) = (self.config().n_in, self.config().n_p);
        let (rows, cols) = (self.config().rows, self.config().cols);
        let mut observed: Vec<&[DisplacementFrame]> = Vec::with_capacity(batch.len());
        for seq in batch {
            if seq.len() < n_in + n_p {
                return Err(TevError::Shape(format!(
                    "sequence of {} frames is shorter than {n_in} + {n_p}",
                    seq.len()
                )));
            }
            observed.push(&seq.frames[..n_in]);
        }
        let predicted = self.rollout_graph(g, p, &observed, n_p)?;
        let mut total: Option<Var> = None;
        for (k, pred) in predicted.into_iter().enumerate() {
            let mut data = Vec::with_capacity(batch.len() * CHANNELS * rows * cols);
            for seq in batch {
                data.extend_from_slice(seq.frames[n_in + k].as_slice());
            }
            let truth = g.constant(Tensor::new([batch.len(), CHANNELS, rows, cols], data)?);
            let term = g.mse(pred, truth)?;
            total = Some(match total {
                Some(t) => g.add(t, term)?,
                None => term,
            });
        }
        Ok(g.scale(total.expect("n_p ≥ 1"), 1.0 / n_p as f32)?)
    }
}
