use std::io::Write;
use std::ops::RangeInclusive;
use std::time::Instant;

use serde::Serialize;
use tev_numerics::ParamSet;

use super::{train, TrainConfig, TrainOutcome};
use crate::dataset::{EventClass, NUM_CLASSES};
use crate::error::{Result, TevError};
use crate::eventnet::{ClassifierConfig, EventClassifier};
use crate::field::TactileSequence;
use crate::parallel::parallel_map;
use crate::pixelmotion::{PixelMotionNet, RolloutResult};

const EVAL_CHUNK: usize = 32;

/// Counts indexed by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::new(classes);
        for (t, p) in pairs {
            m.record(t, p);
        }
        m
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, class)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio((0..self.classes).map(|c| self.get(c, c)).sum(), self.total())
    }

    /// Zero for a class that is never predicted.
    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.predicted_count(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.support(class))
    }

    pub fn f1(&self, class: usize) -> f64 {
        let (p, r) = (self.precision(class), self.recall(class));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn macro_mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.classes).map(f).sum::<f64>() / self.classes as f64
    }

    pub fn macro_precision(&self) -> f64 {
        self.macro_mean(|c| self.precision(c))
    }

    pub fn macro_recall(&self) -> f64 {
        self.macro_mean(|c| self.recall(c))
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_mean(|c| self.f1(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub n_in: usize,
    pub forward_ms: Option<f64>,
    pub end_epoch: Option<usize>,
}

impl ClassifierReport {
    pub fn from_confusion(confusion: ConfusionMatrix, n_in: usize) -> Self {
        ClassifierReport {
            accuracy: confusion.accuracy(),
            macro_precision: confusion.macro_precision(),
            macro_recall: confusion.macro_recall(),
            macro_f1: confusion.macro_f1(),
            confusion,
            n_in,
            forward_ms: None,
            end_epoch: None,
        }
    }

    /// Per-class precision, recall and F1 followed by the confusion matrix.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let n = self.confusion.classes();
        let name = |c: usize| EventClass::from_index(c).map_or_else(|| c.to_string(), |e| e.name().to_string());
        writeln!(out, "class,precision,recall,f1,support")?;
        for c in 0..n {
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{}",
                name(c),
                self.confusion.precision(c),
                self.confusion.recall(c),
                self.confusion.f1(c),
                self.confusion.support(c)
            )?;
        }
        writeln!(
            out,
            "macro,{:.6},{:.6},{:.6},{}",
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.confusion.total()
        )?;
        writeln!(out)?;
        let header: Vec<String> = (0..n).map(name).collect();
        writeln!(out, "true\\predicted,{}", header.join(","))?;
        for t in 0..n {
            let row: Vec<String> = (0..n).map(|p| self.confusion.get(t, p).to_string()).collect();
            writeln!(out, "{},{}", name(t), row.join(","))?;
        }
        Ok(())
    }
}

pub fn evaluate_classifier(
    classifier: &EventClassifier,
    params: &ParamSet,
    sequences: &[&TactileSequence],
    jobs: usize,
) -> Result<ClassifierReport> {
    if sequences.is_empty() {
        return Err(TevError::Config("cannot evaluate on an empty set".into()));
    }
    let chunks: Vec<&[&TactileSequence]> = sequences.chunks(EVAL_CHUNK).collect();
    let parts = parallel_map(&chunks, jobs, |chunk| {
        let windows = chunk.iter().map(|s| classifier.window(s)).collect::<Result<Vec<_>>>()?;
        let outputs = classifier.predict_windows(params, &windows)?;
        chunk
            .iter()
            .zip(outputs)
            .map(|(s, o)| {
                let truth = s
                    .label
                    .ok_or_else(|| TevError::Config("cannot evaluate an unlabelled sequence".into()))?;
                Ok((truth.index(), o.predicted.index()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let confusion = ConfusionMatrix::from_pairs(NUM_CLASSES, parts.into_iter().flatten());
    Ok(ClassifierReport::from_confusion(confusion, classifier.config().n_in))
}

/// Mean wall-clock time of a single-sequence forward pass.
/// Per-call wall time over timed runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub runs: usize,
}

/// Times `forward` individually over `runs` calls after `warmup` untimed
/// calls.
pub fn measure_forward_time(mut forward: impl FnMut() -> Result<()>, warmup: usize, runs: usize) -> Result<Timing> {
    if runs == 0 {
        return Err(TevError::Config("timing needs at least one run".into()));
    }
    for _ in 0..warmup {
        forward()?;
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        forward()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let (mean_ms, std_ms) = mean_std(samples.iter().copied());
    Ok(Timing { mean_ms, std_ms, runs })
}

/// One line of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub model: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub forward_ms: f64,
    pub n_in: usize,
    pub end_epoch: usize,
}

impl Table1Row {
    pub fn new(model: impl Into<String>, report: &ClassifierReport, forward_ms: f64, end_epoch: usize) -> Self {
        Table1Row {
            model: model.into(),
            accuracy: report.accuracy,
            precision: report.macro_precision,
            recall: report.macro_recall,
            f1: report.macro_f1,
            forward_ms,
            n_in: report.n_in,
            end_epoch,
        }
    }
}

pub fn write_table1_csv(rows: &[Table1Row], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "model,acc_pct,prec_pct,rec_pct,f1_pct,t_f_ms,n_in,end_epoch")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2},{:.3},{},{}",
            r.model,
            100.0 * r.accuracy,
            100.0 * r.precision,
            100.0 * r.recall,
            100.0 * r.f1,
            r.forward_ms,
            r.n_in,
            r.end_epoch
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameMetrics {
    /// 1-based index of the predicted frame.
    pub frame_index: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

/// Rollout quality per future frame index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorReport {
    pub frames: Vec<FrameMetrics>,
    pub sequences: usize,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl PredictorReport {
    pub fn from_results(results: &[RolloutResult]) -> Result<Self> {
        let n_p = results.first().map_or(0, |r| r.mse.len());
        if n_p == 0 || results.iter().any(|r| r.mse.len() != n_p) {
            return Err(TevError::Metric("rollout results are empty or differ in length".into()));
        }
        let frames = (0..n_p)
            .map(|k| {
                let (mse_mean, mse_std) = mean_std(results.iter().map(move |r| r.mse[k]));
                let (ssim_mean, ssim_std) = mean_std(results.iter().map(move |r| r.ssim[k]));
                FrameMetrics {
                    frame_index: k + 1,
                    mse_mean,
                    mse_std,
                    ssim_mean,
                    ssim_std,
                }
            })
            .collect();
        Ok(PredictorReport {
            frames,
            sequences: results.len(),
        })
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "frame_index,mse_mean,mse_std,ssim_mean,ssim_std")?;
        for f in &self.frames {
            writeln!(
                out,
                "{},{:.8},{:.8},{:.6},{:.6}",
                f.frame_index, f.mse_mean, f.mse_std, f.ssim_mean, f.ssim_std
            )?;
        }
        Ok(())
    }
}

fn check_rollout_set(sequences: &[&TactileSequence], n_in: usize, n_p: usize) -> Result<()> {
    if sequences.is_empty() {
        return Err(TevError::Config("cannot evaluate on an empty set".into()));
    }
    if n_in == 0 || n_p == 0 {
        return Err(TevError::Config("n_in and n_p must be at least 1".into()));
    }
    if let Some(s) = sequences.iter().find(|s| s.len() < n_in + n_p) {
        return Err(TevError::Shape(format!(
            "a {}-frame sequence cannot cover {n_in} observed and {n_p} predicted frames",
            s.len()
        )));
    }
    Ok(())
}

pub fn evaluate_predictor(
    net: &PixelMotionNet,
    params: &ParamSet,
    sequences: &[&TactileSequence],
    n_in: usize,
    n_p: usize,
    data_range: f64,
    jobs: usize,
) -> Result<PredictorReport> {
    check_rollout_set(sequences, n_in, n_p)?;
    let chunks: Vec<&[&TactileSequence]> = sequences.chunks(EVAL_CHUNK).collect();
    let parts = parallel_map(&chunks, jobs, |chunk| {
        let observed: Vec<_> = chunk.iter().map(|s| &s.frames[..n_in]).collect();
        let predicted = net.rollout_batch(params, &observed, n_p)?;
        chunk
            .iter()
            .zip(predicted)
            .map(|(s, p)| RolloutResult::score(p, s.frames[n_in..n_in + n_p].to_vec(), data_range))
            .collect::<Result<Vec<_>>>()
    })?;
    let results: Vec<RolloutResult> = parts.into_iter().flatten().collect();
    PredictorReport::from_results(&results)
}

/// The same table for a predictor that repeats the last observed frame.
pub fn copy_last_report(
    sequences: &[&TactileSequence],
    n_in: usize,
    n_p: usize,
    data_range: f64,
) -> Result<PredictorReport> {
    check_rollout_set(sequences, n_in, n_p)?;
    let results = sequences
        .iter()
        .map(|s| {
            let predicted = vec![s.frames[n_in - 1].clone(); n_p];
            RolloutResult::score(predicted, s.frames[n_in..n_in + n_p].to_vec(), data_range)
        })
        .collect::<Result<Vec<_>>>()?;
    PredictorReport::from_results(&results)
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub n_in: usize,
    pub report: ClassifierReport,
    pub outcome: TrainOutcome,
}

/// Trains and evaluates one classifier per window length. Returns the
/// window length with the highest validation accuracy (the shortest on
/// ties) and every entry.
pub fn sweep_n_in(
    base: &ClassifierConfig,
    train_set: &[&TactileSequence],
    val_set: &[&TactileSequence],
    cfg: &TrainConfig,
    range: RangeInclusive<usize>,
    mut on_entry: impl FnMut(&SweepEntry),
) -> Result<(usize, Vec<SweepEntry>)> {
    if range.is_empty() || *range.start() == 0 {
        return Err(TevError::Config(format!("invalid window range {range:?}")));
    }
    let mut entries = Vec::new();
    for n_in in range {
        let classifier = EventClassifier::new(base.clone().with_n_in(n_in))?;
        let init = classifier.init(cfg.seed);
        let outcome = train(&classifier, init, train_set, val_set, cfg, |_| {})?;
        let mut report = evaluate_classifier(&classifier, &outcome.params, val_set, cfg.jobs)?;
        report.end_epoch = Some(outcome.end_epoch);
        let entry = SweepEntry { n_in, report, outcome };
        on_entry(&entry);
        entries.push(entry);
    }
    let best = entries
        .iter()
        .fold(
            &entries[0],
            |b, e| if e.report.accuracy > b.report.accuracy { e } else { b },
        )
        .n_in;
    Ok((best, entries))
}
