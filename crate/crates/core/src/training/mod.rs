//! Mini-batch training with Adam, per-epoch validation and early stopping,
//! plus evaluation reports for both networks.

mod eval;
mod models;

pub use eval::{
    copy_last_report, evaluate_classifier, evaluate_predictor, measure_forward_time, sweep_n_in, write_table1_csv,
    ClassifierReport, ConfusionMatrix, FrameMetrics, PredictorReport, SweepEntry, Table1Row, Timing,
};

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tev_numerics::{
    derive_seed, seeded, Adam, AdamConfig, Bindings, Gradients, Graph, LrSchedule, Mode, NumericsError, ParamSet,
    SeededRng, Tensor, Var,
};

use crate::error::{Result, TevError};
use crate::parallel::parallel_map;

/// Samples per gradient shard. Shards are the unit of parallel work, so
/// results do not depend on the worker count.
const SHARD: usize = 4;
const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Multiplicative learning-rate factor per epoch.
    pub lr_decay: f32,
    pub weight_decay: f32,
    pub patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 4e-5,
            lr_decay: 0.95,
            weight_decay: 0.05,
            patience: 10,
            min_delta: 1e-4,
            max_epochs: 100,
            seed: 42,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn classifier() -> Self {
        TrainConfig::default()
    }

    pub fn predictor() -> Self {
        TrainConfig {
            learning_rate: 6e-5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TevError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TevError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(TevError::Config(format!(
                "lr decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(TevError::Config("weight decay must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.learning_rate,
            decay_per_epoch: self.lr_decay,
        }
    }
}

/// A model that can score a batch of samples as a scalar mean loss.
pub trait Trainable: Sync {
    type Sample: Sync;

    fn batch_loss(
        &self,
        g: &mut Graph,
        p: &Bindings,
        batch: &[&Self::Sample],
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Var>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainStatus {
    Completed,
    EarlyStopped,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    pub status: TrainStatus,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Number of epochs run.
    pub end_epoch: usize,
}

pub fn write_history_csv(history: &[EpochRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,lr")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
    }
    Ok(())
}

fn add_scaled(acc: &mut Vec<(String, Vec<f32>)>, grads: &Gradients, scale: f32) {
    if acc.is_empty() {
        for (name, t) in grads.iter() {
            acc.push((name.to_string(), t.data().iter().map(|v| v * scale).collect()));
        }
        return;
    }
    for ((name, sum), (gname, t)) in acc.iter_mut().zip(grads.iter()) {
        debug_assert_eq!(name, gname);
        for (s, v) in sum.iter_mut().zip(t.data()) {
            *s += v * scale;
        }
    }
}

/// Batch-mean loss and gradients. The batch is cut into fixed shards whose
/// gradients are weighted by shard size and summed in shard order.
pub fn batch_gradients<M: Trainable>(
    model: &M,
    params: &ParamSet,
    batch: &[&M::Sample],
    jobs: usize,
    rng_seed: u64,
) -> Result<(f64, Gradients)> {
    let shards: Vec<(usize, &[&M::Sample])> = batch.chunks(SHARD).enumerate().collect();
    let parts = parallel_map(&shards, jobs, |(i, shard)| {
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let mut rng = seeded(derive_seed(rng_seed, *i as u64));
        let loss = model.batch_loss(&mut g, &p, shard, Mode::Train, &mut rng)?;
        let value = g.value(loss).item()? as f64;
        g.backward(loss)?;
        Ok((value, shard.len(), p.gradients(&g)))
    })?;
    let n = batch.len() as f32;
    let mut total = 0.0;
    let mut acc = Vec::new();
    for (value, len, grads) in &parts {
        total += value * *len as f64;
        add_scaled(&mut acc, grads, *len as f32 / n);
    }
    let shapes: Vec<Vec<usize>> = acc
        .iter()
        .map(|(name, _)| params.get(name).map(|t| t.shape().to_vec()))
        .collect::<std::result::Result<_, _>>()?;
    let mut out = Gradients::default();
    for ((name, data), shape) in acc.into_iter().zip(shapes) {
        out.insert(name, Tensor::new(shape, data)?);
    }
    Ok((total / batch.len() as f64, out))
}

/// Sample-weighted mean inference loss.
pub fn mean_loss<M: Trainable>(model: &M, params: &ParamSet, samples: &[&M::Sample], jobs: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(TevError::Config("cannot evaluate loss on an empty set".into()));
    }
    let chunks: Vec<&[&M::Sample]> = samples.chunks(EVAL_CHUNK).collect();
    let parts = parallel_map(&chunks, jobs, |chunk| {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let mut rng = seeded(0);
        let loss = model.batch_loss(&mut g, &p, chunk, Mode::Infer, &mut rng)?;
        Ok(g.value(loss).item()? as f64 * chunk.len() as f64)
    })?;
    Ok(parts.iter().sum::<f64>() / samples.len() as f64)
}

fn is_non_finite(e: &TevError) -> bool {
    matches!(e, TevError::Numerics(NumericsError::NonFinite { .. }))
}

/// Runs the epoch loop until `max_epochs`, early stopping, or a non-finite
/// loss. `on_epoch` sees every completed epoch.
pub fn train<M: Trainable>(
    model: &M,
    init: ParamSet,
    train_set: &[&M::Sample],
    val_set: &[&M::Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TevError::Config("training and validation sets must be nonempty".into()));
    }
    let jobs = cfg.jobs.max(1);
    let mut params = init;
    let mut adam = Adam::new(AdamConfig::new(cfg.schedule(), cfg.weight_decay));
    let mut best = (params.clone(), mean_loss(model, &params, val_set, jobs)?, 0usize);
    let mut history = Vec::new();
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut status = TrainStatus::Completed;
    for epoch in 0..cfg.max_epochs {
        adam.set_epoch(epoch);
        order.shuffle(&mut seeded(derive_seed(cfg.seed, 0xE0C0 + epoch as u64)));
        let mut sum = 0.0;
        let mut diverged = None;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&M::Sample> = idx.iter().map(|&i| train_set[i]).collect();
            let stream = derive_seed(cfg.seed, ((epoch as u64) << 32) | b as u64);
            let (loss, grads) = match batch_gradients(model, &params, &batch, jobs, stream) {
                Ok(v) => v,
                Err(e) if is_non_finite(&e) => {
                    diverged = Some(format!("batch {b}: {e}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                diverged = Some(format!("batch {b} loss {loss}"));
                break;
            }
            if let Err(e) = adam.step(&mut params, &grads) {
                diverged = Some(e.to_string());
                break;
            }
            sum += loss * batch.len() as f64;
        }
        if let Some(msg) = diverged {
            log::warn!("training diverged in epoch {}: {msg}", epoch + 1);
            status = TrainStatus::Diverged;
            break;
        }
        let val_loss = match mean_loss(model, &params, val_set, jobs) {
            Err(e) if is_non_finite(&e) => f64::NAN,
            other => other?,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: sum / train_set.len() as f64,
            val_loss,
            lr: adam.current_lr(),
        };
        on_epoch(&record);
        history.push(record);
        if !val_loss.is_finite() {
            status = TrainStatus::Diverged;
            break;
        }
        if val_loss < best.1 - cfg.min_delta {
            best = (params.clone(), val_loss, epoch + 1);
            stale = 0;
        } else {
            if stale >= cfg.patience {
                status = TrainStatus::EarlyStopped;
                break;
            }
            stale += 1;
        }
    }
    let end_epoch = history.len();
    Ok(TrainOutcome {
        params: best.0,
        best_val_loss: best.1,
        best_epoch: best.2,
        history,
        status,
        end_epoch,
    })
}
