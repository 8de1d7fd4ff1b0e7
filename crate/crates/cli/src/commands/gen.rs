use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tev_core::dataset::{build_corpus, EventClass, DEFAULT_NOISE_MM};

use super::write_output;
use crate::context::{overlay, usage, CliResult, Context};

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Event class to generate, or `all` [default: all]
    #[arg(long)]
    class: Option<String>,
    /// Sequences per class [default: 500]
    #[arg(long)]
    count: Option<usize>,
    /// Corpus seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Per-node Gaussian noise in mm [default: 0.02]
    #[arg(long)]
    noise: Option<f64>,
    /// Output corpus file [default: corpus.tevd]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenSettings {
    class: String,
    count: usize,
    seed: u64,
    noise: f64,
    out: PathBuf,
}

impl Default for GenSettings {
    fn default() -> Self {
        GenSettings {
            class: "all".into(),
            count: 500,
            seed: 42,
            noise: DEFAULT_NOISE_MM,
            out: "corpus.tevd".into(),
        }
    }
}

pub fn run(args: GenArgs, ctx: &Context) -> CliResult<()> {
    let mut s: GenSettings = ctx.section("gen")?;
    overlay!(s, args, [class, count, seed, noise, out]);
    ctx.echo("gen", &s)?;
    if s.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    if !(s.noise >= 0.0) {
        return Err(usage("--noise must be nonnegative"));
    }
    let only = match s.class.as_str() {
        "all" => None,
        name => Some(name.parse::<EventClass>()?),
    };
    let mut corpus = build_corpus(s.count, s.seed, s.noise, ctx.jobs)?;
    if let Some(class) = only {
        corpus = corpus.filter_classes(&[class]);
    }
    write_output(ctx, &s.out, &corpus.to_bytes()?)?;
    let counts = corpus.class_counts();
    println!("class,count");
    for class in EventClass::ALL {
        if counts[class.index()] > 0 {
            println!("{},{}", class.name(), counts[class.index()]);
        }
    }
    println!("total,{}", corpus.len());
    println!("classes,{}", counts.iter().filter(|&&c| c > 0).count());
    Ok(())
}
