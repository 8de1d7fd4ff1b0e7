use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tev_core::dataset::{split, SplitRatio};
use tev_core::pixelmotion::PREDICTOR_CLASSES;

use super::{load_corpus, load_predictor, write_output};
use crate::context::{overlay, usage, CliResult, Context};

#[derive(Args, Debug)]
pub struct RolloutArgs {
    /// Predictor checkpoint [default: pixelmotion.tevw]
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Corpus file [default: corpus.tevd]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Frames to predict [default: 5]
    #[arg(long = "np")]
    n_p: Option<usize>,
    /// Directory for truth/prediction PPM strips [default: rollouts]
    #[arg(long)]
    ppm: Option<PathBuf>,
    /// Corpus index of a single sequence; otherwise the first --count validation sequences
    #[arg(long)]
    index: Option<usize>,
    /// Sequences exported when no --index is given [default: 4]
    #[arg(long)]
    count: Option<usize>,
    /// Displacement mapped to full brightness, mm [default: corpus data range]
    #[arg(long)]
    v_max: Option<f64>,
    /// Pixels per grid node [default: 4]
    #[arg(long)]
    scale: Option<usize>,
    /// Split seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RolloutSettings {
    ckpt: PathBuf,
    data: PathBuf,
    n_p: usize,
    ppm: PathBuf,
    index: Option<usize>,
    count: usize,
    v_max: Option<f64>,
    scale: usize,
    seed: u64,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        RolloutSettings {
            ckpt: "pixelmotion.tevw".into(),
            data: "corpus.tevd".into(),
            n_p: 5,
            ppm: "rollouts".into(),
            index: None,
            count: 4,
            v_max: None,
            scale: 4,
            seed: 42,
        }
    }
}

pub fn run(args: RolloutArgs, ctx: &Context) -> CliResult<()> {
    let mut s: RolloutSettings = ctx.section("rollout")?;
    overlay!(s, args, [ckpt, data, n_p, ppm, index, count, v_max, scale, seed]);
    ctx.echo("rollout", &s)?;
    if s.n_p == 0 {
        return Err(usage("--np must be at least 1"));
    }
    let (net, params) = load_predictor(ctx, &s.ckpt)?;
    let corpus = load_corpus(ctx, &s.data)?;
    let v_max = s.v_max.unwrap_or(corpus.header.data_range);
    let chosen: Vec<usize> = match s.index {
        Some(i) if i < corpus.len() => vec![i],
        Some(i) => {
            return Err(usage(format!(
                "index {i} is outside a {}-sequence corpus",
                corpus.len()
            )))
        }
        None => split(&corpus, SplitRatio::default(), s.seed)?
            .validation
            .into_iter()
            .filter(|&i| {
                corpus.sequences[i]
                    .label
                    .is_some_and(|l| PREDICTOR_CLASSES.contains(&l))
            })
            .take(s.count)
            .collect(),
    };
    let n_in = net.config().n_in;
    println!("index,class,frame,mse,ssim");
    for i in chosen {
        let seq = &corpus.sequences[i];
        let result = net.evaluate_rollout(&params, &seq.frames, n_in, s.n_p, corpus.header.data_range)?;
        let class = seq.label.map_or("unlabelled", |c| c.name());
        for k in 0..s.n_p {
            println!("{i},{class},{},{:.8},{:.6}", k + 1, result.mse[k], result.ssim[k]);
        }
        let strip = result.strip(v_max, s.scale)?;
        write_output(ctx, &s.ppm.join(format!("rollout-{i:05}.ppm")), &strip.to_ppm())?;
    }
    Ok(())
}
