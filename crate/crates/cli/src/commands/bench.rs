use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tev_core::dataset::{generate_on, EventClass, ScenarioConfig, DEFAULT_NOISE_MM};
use tev_core::field::{GridSpec, SEQUENCE_LEN};
use tev_core::pixelmotion::predict_event;
use tev_core::training::{measure_forward_time, Timing};

use super::{csv_to_string, load_classifier, load_predictor, write_output};
use crate::context::{overlay, usage, CliResult, Context};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Classifier checkpoint [default: lstm.tevw]
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Predictor checkpoint; also times the predict-then-classify cascade
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Timed runs [default: 100]
    #[arg(long)]
    runs: Option<usize>,
    /// Untimed warm-up runs [default: 10]
    #[arg(long)]
    warmup: Option<usize>,
    /// Frames the cascade predicts [default: 3]
    #[arg(long = "np")]
    n_p: Option<usize>,
    /// Seed of the generated benchmark sequence [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Optional CSV with one row per timed path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchSettings {
    ckpt: PathBuf,
    predictor: Option<PathBuf>,
    runs: usize,
    warmup: usize,
    n_p: usize,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            ckpt: "lstm.tevw".into(),
            predictor: None,
            runs: 100,
            warmup: 10,
            n_p: 3,
            seed: 42,
            out: None,
        }
    }
}

pub fn run(args: BenchArgs, ctx: &Context) -> CliResult<()> {
    let mut s: BenchSettings = ctx.section("bench")?;
    overlay!(s, args, [ckpt, predictor, runs, warmup, n_p, seed, out]);
    ctx.echo("bench", &s)?;
    if s.runs < 2 {
        return Err(usage("--runs must be at least 2 to report a spread"));
    }
    let (clf, params) = load_classifier(ctx, &s.ckpt)?;
    let cc = clf.config();
    let scenario = ScenarioConfig::random(EventClass::TranslationalSlip, DEFAULT_NOISE_MM, s.seed);
    let grid = GridSpec {
        rows: cc.rows,
        cols: cc.cols,
        ..GridSpec::default()
    };
    let seq = generate_on(&scenario, &grid, SEQUENCE_LEN)?;
    let mut rows = vec![(
        "classifier",
        measure_forward_time(|| clf.classify_sequence(&params, &seq).map(|_| ()), s.warmup, s.runs)?,
    )];
    if let Some(path) = &s.predictor {
        let (net, pp) = load_predictor(ctx, path)?;
        if s.n_p == 0 || s.n_p >= cc.n_in {
            return Err(usage(format!("--np must be between 1 and {}", cc.n_in - 1)));
        }
        let observed = &seq.frames[..cc.n_in - s.n_p];
        let timing = measure_forward_time(
            || predict_event(&net, &pp, &clf, &params, observed, s.n_p).map(|_| ()),
            s.warmup,
            s.runs,
        )?;
        rows.push(("cascade", timing));
    }
    for (name, t) in &rows {
        println!("{name}: {:.3} ± {:.3} ms over {} runs", t.mean_ms, t.std_ms, t.runs);
    }
    if let Some(path) = &s.out {
        let bytes = csv_to_string(|w| write_timings(&rows, w))?;
        write_output(ctx, path, &bytes)?;
    }
    Ok(())
}

fn write_timings(rows: &[(&str, Timing)], w: &mut Vec<u8>) -> std::io::Result<()> {
    use std::io::Write;
    writeln!(w, "path,mean_ms,std_ms,runs")?;
    for (name, t) in rows {
        writeln!(w, "{name},{:.6},{:.6},{}", t.mean_ms, t.std_ms, t.runs)?;
    }
    Ok(())
}
