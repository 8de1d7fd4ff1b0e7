pub mod bench;
pub mod eval;
pub mod gen;
pub mod grasp;
pub mod rollout;
pub mod train;
pub mod viz;

use std::path::Path;

use serde::{Deserialize, Serialize};
use tev_core::dataset::{split, Corpus, SplitRatio};
use tev_core::eventnet::EventClassifier;
use tev_core::field::TactileSequence;
use tev_core::pixelmotion::PixelMotionNet;
use tev_numerics::{Checkpoint, ParamSet};

use crate::context::{usage, CliError, CliResult, Context};

pub fn load_corpus(ctx: &Context, path: &Path) -> CliResult<Corpus> {
    let path = ctx.path(path);
    Corpus::load(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub enum Model {
    Classifier(EventClassifier, ParamSet),
    Predictor(PixelMotionNet, ParamSet),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Classifier(c, _) => c.config().variant.name(),
            Model::Predictor(..) => "PixelMotionNet",
        }
    }
}

pub fn load_checkpoint(ctx: &Context, path: &Path) -> CliResult<(Model, serde_json::Value)> {
    let path = ctx.path(path);
    let ckpt = Checkpoint::load(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let arch = ckpt.architecture;
    let model = match arch.get("model").and_then(|m| m.as_str()) {
        Some("classifier") => Model::Classifier(EventClassifier::from_architecture(&arch)?, ckpt.params),
        Some("predictor") => Model::Predictor(PixelMotionNet::from_architecture(&arch)?, ckpt.params),
        other => {
            return Err(CliError::Runtime(format!(
                "{}: unknown model kind {other:?}",
                path.display()
            )))
        }
    };
    Ok((model, arch))
}

pub fn load_classifier(ctx: &Context, path: &Path) -> CliResult<(EventClassifier, ParamSet)> {
    match load_checkpoint(ctx, path)?.0 {
        Model::Classifier(c, p) => Ok((c, p)),
        Model::Predictor(..) => Err(usage(format!("{} holds a predictor, not a classifier", path.display()))),
    }
}

pub fn load_predictor(ctx: &Context, path: &Path) -> CliResult<(PixelMotionNet, ParamSet)> {
    match load_checkpoint(ctx, path)?.0 {
        Model::Predictor(n, p) => Ok((n, p)),
        Model::Classifier(..) => Err(usage(format!("{} holds a classifier, not a predictor", path.display()))),
    }
}

pub fn write_output(ctx: &Context, path: &Path, bytes: &[u8]) -> CliResult<()> {
    let path = ctx.path(path);
    tev_core::io::write_atomic(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Which part of a corpus to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Validation,
    All,
}

pub fn select(corpus: &Corpus, part: Part, seed: u64) -> CliResult<Vec<&TactileSequence>> {
    let idx: Vec<usize> = match part {
        Part::All => (0..corpus.len()).collect(),
        Part::Train => split(corpus, SplitRatio::default(), seed)?.train,
        Part::Validation => split(corpus, SplitRatio::default(), seed)?.validation,
    };
    Ok(corpus.select(&idx))
}

pub fn csv_to_string(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    write(&mut out)?;
    Ok(out)
}

/// Writes to `path` when given, otherwise to stdout.
pub fn emit(ctx: &Context, path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => write_output(ctx, p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}
