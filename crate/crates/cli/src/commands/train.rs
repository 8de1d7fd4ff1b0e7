use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tev_core::eventnet::{ClassifierConfig, EventClassifier, Variant};
use tev_core::pixelmotion::{PixelMotionNet, PredictorConfig, PREDICTOR_CLASSES};
use tev_core::training::{train, write_history_csv, EpochRecord, TrainConfig, TrainOutcome, TrainStatus, Trainable};
use tev_numerics::{Checkpoint, ParamSet};

use super::{csv_to_string, load_corpus, select, write_output, Part};
use crate::context::{overlay, usage, CliError, CliResult, Context};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// lstm, convlstm, cnnlstm or pixelmotion [default: lstm]
    #[arg(long)]
    model: Option<String>,
    /// Corpus file [default: corpus.tevd]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Initial learning rate [default: 4e-5 for classifiers, 6e-5 for pixelmotion]
    #[arg(long)]
    lr: Option<f32>,
    /// Maximum epochs [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 16]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning-rate factor per epoch [default: 0.95]
    #[arg(long)]
    lr_decay: Option<f32>,
    /// L2 weight decay [default: 0.05]
    #[arg(long)]
    weight_decay: Option<f32>,
    /// Non-improving epochs tolerated before stopping [default: 10]
    #[arg(long)]
    patience: Option<usize>,
    /// Seed for the split, initialisation, shuffling and dropout [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Input window in frames [default: 12 for classifiers, 10 for pixelmotion]
    #[arg(long)]
    n_in: Option<usize>,
    /// Frames rolled out per predictor training window [default: 5]
    #[arg(long = "np")]
    n_p: Option<usize>,
    /// Checkpoint file [default: <model>.tevw]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch loss CSV [default: <out>.history.csv]
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    model: String,
    data: PathBuf,
    lr: Option<f32>,
    epochs: usize,
    batch_size: usize,
    lr_decay: f32,
    weight_decay: f32,
    patience: usize,
    seed: u64,
    n_in: Option<usize>,
    n_p: usize,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            model: "lstm".into(),
            data: "corpus.tevd".into(),
            lr: None,
            epochs: d.max_epochs,
            batch_size: d.batch_size,
            lr_decay: d.lr_decay,
            weight_decay: d.weight_decay,
            patience: d.patience,
            seed: d.seed,
            n_in: None,
            n_p: PredictorConfig::default().n_p,
            out: None,
            history: None,
        }
    }
}

pub fn run(args: TrainArgs, ctx: &Context) -> CliResult<()> {
    let mut s: TrainSettings = ctx.section("train")?;
    overlay!(
        s,
        args,
        [
            model,
            data,
            lr,
            epochs,
            batch_size,
            lr_decay,
            weight_decay,
            patience,
            seed,
            n_in,
            n_p,
            out,
            history
        ]
    );
    let predictor = matches!(
        s.model.to_ascii_lowercase().as_str(),
        "pixelmotion" | "pixelmotionnet" | "predictor"
    );
    let variant = if predictor {
        None
    } else {
        Some(s.model.parse::<Variant>()?)
    };
    let defaults = if predictor {
        TrainConfig::predictor()
    } else {
        TrainConfig::classifier()
    };
    s.lr.get_or_insert(defaults.learning_rate);
    s.n_in.get_or_insert(match variant {
        Some(v) => ClassifierConfig::new(v).n_in,
        None => PredictorConfig::default().n_in,
    });
    let out = s
        .out
        .get_or_insert_with(|| PathBuf::from(format!("{}.tevw", s.model.to_ascii_lowercase().replace('+', ""))))
        .clone();
    s.history.get_or_insert_with(|| {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".history.csv");
        out.with_file_name(name)
    });
    ctx.echo("train", &s)?;
    let cfg = TrainConfig {
        batch_size: s.batch_size,
        learning_rate: s.lr.unwrap_or(defaults.learning_rate),
        lr_decay: s.lr_decay,
        weight_decay: s.weight_decay,
        patience: s.patience,
        max_epochs: s.epochs,
        seed: s.seed,
        jobs: ctx.jobs,
        ..defaults
    };
    cfg.validate()?;
    let n_in = s.n_in.unwrap_or(1);
    let mut corpus = load_corpus(ctx, &s.data)?;
    if predictor {
        corpus = corpus.filter_classes(&PREDICTOR_CLASSES);
        if corpus.is_empty() {
            return Err(usage("the corpus holds no slip, stable or noncontact sequences"));
        }
    }
    let train_set = select(&corpus, Part::Train, s.seed)?;
    let val_set = select(&corpus, Part::Validation, s.seed)?;
    log::info!(
        "{} training and {} validation sequences",
        train_set.len(),
        val_set.len()
    );
    let (architecture, outcome) = match variant {
        Some(v) => {
            let clf = EventClassifier::new(ClassifierConfig::new(v).with_n_in(n_in))?;
            let init = clf.init(s.seed);
            (clf.architecture(), fit(&clf, init, &train_set, &val_set, &cfg)?)
        }
        None => {
            let config = PredictorConfig {
                n_in,
                n_p: s.n_p,
                rows: corpus.header.rows,
                cols: corpus.header.cols,
                ..PredictorConfig::default()
            };
            let net = PixelMotionNet::new(config)?;
            let mut init = net.init(s.seed);
            net.zero_velocity_head(&mut init)?;
            (net.architecture(), fit(&net, init, &train_set, &val_set, &cfg)?)
        }
    };
    let history = csv_to_string(|w| write_history_csv(&outcome.history, w))?;
    if let Some(path) = &s.history {
        write_output(ctx, path, &history)?;
    }
    if outcome.status == TrainStatus::Diverged {
        return Err(CliError::Runtime(format!(
            "training diverged after {} epochs; no checkpoint written",
            outcome.end_epoch
        )));
    }
    save(ctx, &out, architecture, &outcome)?;
    println!(
        "status={:?} end_epoch={} best_epoch={} best_val_loss={:.6}",
        outcome.status, outcome.end_epoch, outcome.best_epoch, outcome.best_val_loss
    );
    Ok(())
}

fn fit<M: Trainable>(
    model: &M,
    init: ParamSet,
    train_set: &[&M::Sample],
    val_set: &[&M::Sample],
    cfg: &TrainConfig,
) -> CliResult<TrainOutcome> {
    let outcome = train(model, init, train_set, val_set, cfg, |r: &EpochRecord| {
        log::info!(
            "epoch {:>3}  train {:.6}  val {:.6}  lr {:.3e}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.lr
        )
    })?;
    Ok(outcome)
}

fn save(
    ctx: &Context,
    out: &std::path::Path,
    mut architecture: serde_json::Value,
    outcome: &TrainOutcome,
) -> CliResult<()> {
    architecture["training"] = serde_json::json!({
        "end_epoch": outcome.end_epoch,
        "best_epoch": outcome.best_epoch,
        "best_val_loss": outcome.best_val_loss,
        "status": outcome.status,
    });
    let bytes = Checkpoint::new(architecture, outcome.params.clone()).to_bytes()?;
    write_output(ctx, out, &bytes)
}
