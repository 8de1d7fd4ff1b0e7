use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tev_core::dataset::EventClass;
use tev_core::pixelmotion::PREDICTOR_CLASSES;
use tev_core::training::{
    copy_last_report, evaluate_classifier, evaluate_predictor, measure_forward_time, write_table1_csv, Table1Row,
};

use super::{csv_to_string, emit, load_checkpoint, load_corpus, select, write_output, Model, Part};
use crate::context::{overlay, usage, CliResult, Context};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; repeat for a comparison table
    #[arg(long)]
    ckpt: Vec<PathBuf>,
    /// Expected model kind (lstm, convlstm, cnnlstm, pixelmotion); checked against each checkpoint
    #[arg(long)]
    model: Option<String>,
    /// Corpus file [default: corpus.tevd]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Corpus part to evaluate on [default: validation]
    #[arg(long, value_enum)]
    part: Option<Part>,
    /// Split seed; match the training seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Summary CSV: one row per classifier, or per-frame rollout metrics [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-class metrics and confusion matrix CSV (single classifier only)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Copy-last-frame baseline CSV for predictor checkpoints
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Predicted frames scored per sequence [default: 5]
    #[arg(long = "np")]
    n_p: Option<usize>,
    /// Timed forward passes per classifier [default: 100]
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    ckpt: Vec<PathBuf>,
    model: Option<String>,
    data: PathBuf,
    part: Part,
    seed: u64,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    baseline: Option<PathBuf>,
    n_p: usize,
    runs: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            ckpt: Vec::new(),
            model: None,
            data: "corpus.tevd".into(),
            part: Part::Validation,
            seed: 42,
            out: None,
            report: None,
            baseline: None,
            n_p: 5,
            runs: 100,
        }
    }
}

fn same_kind(expected: &str, model: &Model) -> bool {
    let norm = |s: &str| s.to_ascii_lowercase().replace(['+', '-', '_'], "");
    let expected = norm(expected);
    match model {
        Model::Predictor(..) => matches!(expected.as_str(), "pixelmotion" | "pixelmotionnet" | "predictor"),
        Model::Classifier(c, _) => norm(c.config().variant.name()) == expected,
    }
}

pub fn run(args: EvalArgs, ctx: &Context) -> CliResult<()> {
    let mut s: EvalSettings = ctx.section("eval")?;
    if !args.ckpt.is_empty() {
        s.ckpt = args.ckpt.clone();
    }
    overlay!(s, args, [model, data, part, seed, out, report, baseline, n_p, runs]);
    ctx.echo("eval", &s)?;
    if s.ckpt.is_empty() {
        return Err(usage("at least one --ckpt is required"));
    }
    if s.runs == 0 || s.n_p == 0 {
        return Err(usage("--runs and --np must be at least 1"));
    }
    let models = s
        .ckpt
        .iter()
        .map(|p| load_checkpoint(ctx, p))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(expected) = &s.model {
        if let Some((m, _)) = models.iter().find(|(m, _)| !same_kind(expected, m)) {
            return Err(usage(format!("expected a {expected} checkpoint, found {}", m.kind())));
        }
    }
    let predictors = models.iter().filter(|(m, _)| matches!(m, Model::Predictor(..))).count();
    if predictors > 0 && predictors != models.len() {
        return Err(usage(
            "classifier and predictor checkpoints cannot be evaluated together",
        ));
    }
    let corpus = load_corpus(ctx, &s.data)?;
    let data_range = corpus.header.data_range;
    let sequences = select(&corpus, s.part, s.seed)?;
    if predictors > 0 {
        if models.len() != 1 {
            return Err(usage("evaluate one predictor checkpoint at a time"));
        }
        let Model::Predictor(net, params) = &models[0].0 else {
            unreachable!()
        };
        let subset: Vec<_> = sequences
            .into_iter()
            .filter(|q| q.label.is_some_and(|l| PREDICTOR_CLASSES.contains(&l)))
            .collect();
        if subset.is_empty() {
            return Err(usage("no slip, stable or noncontact sequences to roll out"));
        }
        let n_in = net.config().n_in;
        let report = evaluate_predictor(net, params, &subset, n_in, s.n_p, data_range, ctx.jobs)?;
        emit(ctx, s.out.as_deref(), &csv_to_string(|w| report.write_csv(w))?)?;
        if let Some(path) = &s.baseline {
            let base = copy_last_report(&subset, n_in, s.n_p, data_range)?;
            write_output(ctx, path, &csv_to_string(|w| base.write_csv(w))?)?;
        }
        return Ok(());
    }
    if s.report.is_some() && models.len() != 1 {
        return Err(usage("--report needs exactly one classifier checkpoint"));
    }
    let mut rows = Vec::new();
    for (model, arch) in &models {
        let Model::Classifier(clf, params) = model else {
            unreachable!()
        };
        let report = evaluate_classifier(clf, params, &sequences, ctx.jobs)?;
        let probe = sequences
            .iter()
            .find(|q| q.label == Some(EventClass::TranslationalSlip))
            .or(sequences.first())
            .ok_or_else(|| usage("the selected corpus part is empty"))?;
        let timing = measure_forward_time(|| clf.classify_sequence(params, probe).map(|_| ()), 10, s.runs)?;
        let end_epoch = arch["training"]["end_epoch"].as_u64().unwrap_or(0) as usize;
        rows.push(Table1Row::new(model.kind(), &report, timing.mean_ms, end_epoch));
        if let Some(path) = &s.report {
            write_output(ctx, path, &csv_to_string(|w| report.write_csv(w))?)?;
        }
    }
    emit(ctx, s.out.as_deref(), &csv_to_string(|w| write_table1_csv(&rows, w))?)
}
